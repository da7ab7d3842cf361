//! Renders a perspective view and the bird's-eye overview of each
//! fixture scene into a directory.
//!
//! ```text
//! cargo run --example render_views -- out/
//! ```

use cov_core::geometry::{CameraPose, Intrinsics};
use cov_core::render::{encode_image, render_birds_eye, render_view, ImageFormat, RenderSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "renders".into()));
    std::fs::create_dir_all(&out)?;
    let settings = RenderSettings::default();
    let k = Intrinsics {
        fx: 320.0,
        fy: 320.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
    };
    for f in cov_core::fixtures::all() {
        let (eye, target, _, _) = f.path;
        let pose = CameraPose::look_at(eye, target, [0.0, 0.0, 1.0]);
        let view = render_view(&f.scene, &pose, &k, &settings);
        let be = render_birds_eye(&f.scene, &settings);
        let vp = out.join(format!("{}_view.png", f.name));
        let bp = out.join(format!("{}_birds_eye.png", f.name));
        std::fs::write(&vp, encode_image(&view.image, ImageFormat::Png)?)?;
        std::fs::write(&bp, encode_image(&be.image, ImageFormat::Png)?)?;
        println!("{} and {}", vp.display(), bp.display());
    }
    Ok(())
}
