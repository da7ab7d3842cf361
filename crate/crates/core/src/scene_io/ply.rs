//! Minimal PLY reader/writer for colored vertex clouds.
//!
//! Only the `vertex` element is interpreted; other elements (faces, edges)
//! are parsed and discarded so that files exported by mesh tools still load.

use std::io::Write;
use std::path::Path;

use super::{SceneError, ScenePointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn malformed(path: &Path, reason: impl Into<String>) -> SceneError {
    SceneError::MalformedFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn unsupported(path: &Path, reason: impl Into<String>) -> SceneError {
    SceneError::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header, SceneError> {
    let mut offset = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(malformed(path, "header is not terminated by end_header"));
        };
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| malformed(path, "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        offset += nl + 1;
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if first {
            if line != "ply" {
                return Err(malformed(path, "missing 'ply' magic line"));
            }
            first = false;
            continue;
        }
        match keyword {
            "" | "comment" | "obj_info" => {}
            "format" => {
                encoding = Some(match words.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLe,
                    Some("binary_big_endian") => {
                        return Err(unsupported(path, "big-endian PLY is not supported"))
                    }
                    other => {
                        return Err(malformed(path, format!("unknown format {other:?}")))
                    }
                });
            }
            "element" => {
                let name = words
                    .next()
                    .ok_or_else(|| malformed(path, "element without a name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| malformed(path, format!("element {name} has no valid count")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| malformed(path, "property declared before any element"))?;
                let ty = words.next().unwrap_or("");
                let kind = if ty == "list" {
                    let count = words.next().and_then(Scalar::parse);
                    let item = words.next().and_then(Scalar::parse);
                    match (count, item) {
                        (Some(count), Some(item)) if !count.is_float() => {
                            PropertyKind::List { count, item }
                        }
                        _ => return Err(malformed(path, format!("bad list property: {line}"))),
                    }
                } else {
                    PropertyKind::Scalar(
                        Scalar::parse(ty)
                            .ok_or_else(|| malformed(path, format!("unknown type {ty}")))?,
                    )
                };
                let name = words
                    .next()
                    .ok_or_else(|| malformed(path, format!("property without name: {line}")))?;
                element.properties.push(Property {
                    name: name.to_string(),
                    kind,
                });
            }
            "end_header" => break,
            other => return Err(malformed(path, format!("unknown header keyword {other}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| malformed(path, "missing format line"))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: offset,
    })
}

/// Sequential reader over the body, abstracting over ASCII tokens and
/// little-endian binary values.
enum Body<'a> {
    Ascii(std::str::SplitAsciiWhitespace<'a>),
    Binary { bytes: &'a [u8], pos: usize },
}

impl Body<'_> {
    fn read(&mut self, ty: Scalar, path: &Path) -> Result<f64, SceneError> {
        match self {
            Body::Ascii(tokens) => {
                let tok = tokens
                    .next()
                    .ok_or_else(|| malformed(path, "body ended before all elements were read"))?;
                let v: f64 = tok
                    .parse()
                    .map_err(|_| malformed(path, format!("not a number: {tok}")))?;
                if !ty.is_float() && v.fract() != 0.0 {
                    return Err(malformed(path, format!("expected integer, got {tok}")));
                }
                Ok(v)
            }
            Body::Binary { bytes, pos } => {
                let n = ty.size();
                let chunk = bytes
                    .get(*pos..*pos + n)
                    .ok_or_else(|| malformed(path, "body ended before all elements were read"))?;
                *pos += n;
                Ok(match ty {
                    Scalar::I8 => f64::from(chunk[0] as i8),
                    Scalar::U8 => f64::from(chunk[0]),
                    Scalar::I16 => f64::from(i16::from_le_bytes([chunk[0], chunk[1]])),
                    Scalar::U16 => f64::from(u16::from_le_bytes([chunk[0], chunk[1]])),
                    Scalar::I32 => f64::from(i32::from_le_bytes(chunk.try_into().unwrap())),
                    Scalar::U32 => f64::from(u32::from_le_bytes(chunk.try_into().unwrap())),
                    Scalar::F32 => f64::from(f32::from_le_bytes(chunk.try_into().unwrap())),
                    Scalar::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
                })
            }
        }
    }

    fn finish(self, path: &Path) -> Result<(), SceneError> {
        let leftover = match self {
            Body::Ascii(mut tokens) => tokens.next().is_some(),
            Body::Binary { bytes, pos } => pos != bytes.len(),
        };
        if leftover {
            Err(malformed(path, "trailing data after the declared elements"))
        } else {
            Ok(())
        }
    }
}

struct VertexLayout {
    xyz: [usize; 3],
    rgb: [usize; 3],
    color_type: Scalar,
}

fn vertex_layout(element: &Element, path: &Path) -> Result<VertexLayout, SceneError> {
    let find = |names: &[&str]| {
        element.properties.iter().position(|p| {
            names.contains(&p.name.as_str()) && matches!(p.kind, PropertyKind::Scalar(_))
        })
    };
    let mut xyz = [0; 3];
    for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = find(&[name])
            .ok_or_else(|| malformed(path, format!("vertex element lacks property {name}")))?;
    }
    let mut rgb = [0; 3];
    for (slot, (short, long)) in rgb
        .iter_mut()
        .zip([("red", "diffuse_red"), ("green", "diffuse_green"), ("blue", "diffuse_blue")])
    {
        *slot = find(&[short, long]).ok_or_else(|| {
            unsupported(path, format!("vertex element lacks color property {short}"))
        })?;
    }
    let color_types: Vec<Scalar> = rgb
        .iter()
        .map(|&i| match element.properties[i].kind {
            PropertyKind::Scalar(s) => s,
            PropertyKind::List { .. } => unreachable!(),
        })
        .collect();
    let color_type = color_types[0];
    if color_types.iter().any(|&t| t != color_type) {
        return Err(unsupported(path, "color channels have mixed types"));
    }
    if !matches!(color_type, Scalar::U8 | Scalar::U16 | Scalar::F32 | Scalar::F64) {
        return Err(unsupported(
            path,
            format!("color type {color_type:?} is not uchar, ushort, float or double"),
        ));
    }
    Ok(VertexLayout {
        xyz,
        rgb,
        color_type,
    })
}

/// Parses PLY bytes. `path` is only used for error messages.
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<ScenePointCloud, SceneError> {
    let header = parse_header(bytes, path)?;
    let body_bytes = &bytes[header.body_offset..];
    let mut body = match header.encoding {
        Encoding::Ascii => Body::Ascii(
            std::str::from_utf8(body_bytes)
                .map_err(|_| malformed(path, "ASCII body is not valid UTF-8"))?
                .split_ascii_whitespace(),
        ),
        Encoding::BinaryLe => Body::Binary {
            bytes: body_bytes,
            pos: 0,
        },
    };

    let vertex = header
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| malformed(path, "no vertex element"))?;
    let layout = vertex_layout(vertex, path)?;
    let color_div = match layout.color_type {
        Scalar::U8 => 255.0,
        Scalar::U16 => 65535.0,
        _ => 1.0,
    };

    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = Vec::with_capacity(vertex.count);
    let mut row = Vec::new();
    for element in &header.elements {
        let is_vertex = element.name == "vertex";
        for _ in 0..element.count {
            row.clear();
            for prop in &element.properties {
                match prop.kind {
                    PropertyKind::Scalar(ty) => row.push(body.read(ty, path)?),
                    PropertyKind::List { count, item } => {
                        let n = body.read(count, path)?;
                        if n < 0.0 {
                            return Err(malformed(path, "negative list length"));
                        }
                        for _ in 0..n as usize {
                            body.read(item, path)?;
                        }
                        row.push(f64::NAN);
                    }
                }
            }
            if is_vertex {
                let p = layout.xyz.map(|i| row[i] as f32);
                if p.iter().any(|c| !c.is_finite()) {
                    return Err(malformed(
                        path,
                        format!("vertex {} has a non-finite coordinate", points.len()),
                    ));
                }
                let c = layout.rgb.map(|i| (row[i] / color_div) as f32);
                if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(malformed(
                        path,
                        format!("vertex {} has a color outside [0, 1]", points.len()),
                    ));
                }
                points.push(p);
                colors.push(c);
            }
        }
    }
    body.finish(path)?;
    ScenePointCloud::new(points, colors).map_err(|reason| malformed(path, reason))
}

/// Writes a binary little-endian PLY with float coordinates and 8-bit colors.
pub fn save_ply(cloud: &ScenePointCloud, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(200 + cloud.len() * 15);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )
    .expect("write to Vec");
    for (p, c) in cloud.points().iter().zip(cloud.colors()) {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in c {
            out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    std::fs::write(path, out).map_err(|e| SceneError::io(path, e))
}
