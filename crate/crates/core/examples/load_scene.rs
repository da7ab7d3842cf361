//! Loads a PLY point cloud (or the built-in cube room) and an optional
//! episode file, then prints what was found.
//!
//! ```text
//! cargo run --example load_scene -- scene.ply [episode.json]
//! ```

use cov_core::scene_io::{load_episode, load_point_cloud, save_ply, subsample_frames, LoadOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scene = match args.first() {
        Some(p) => load_point_cloud(p)?,
        None => {
            let tmp = std::env::temp_dir().join("cov_cube_room.ply");
            save_ply(&cov_core::fixtures::cube_room(), &tmp)?;
            println!("no scene given, wrote and reloaded {}", tmp.display());
            load_point_cloud(&tmp)?
        }
    };
    let b = scene.aabb();
    println!("{} points, bounds {:?} .. {:?}", scene.len(), b.min, b.max);
    if let Some(ep) = args.get(1) {
        let ep = load_episode(ep, LoadOptions { strict_images: false })?;
        let kept = subsample_frames(&ep.frames, 10);
        println!("episode {}: {:?}", ep.episode_id, ep.question);
        println!("{} frames, {} after 1-in-10 subsampling", ep.frames.len(), kept.len());
    }
    Ok(())
}
