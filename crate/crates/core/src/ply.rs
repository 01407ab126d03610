//! PLY point-cloud I/O for the guidance renderer.
//!
//! Supported subset: ASCII or binary little-endian vertex elements with
//! x, y, z as float/double and red, green, blue as uchar. Extra scalar vertex
//! properties are skipped; anything else is rejected with a reason.

use crate::error::PlyError;
use crate::math::Vec3;
use crate::pcrender::GuidancePointCloud;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
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

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes([
                bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
            ]),
        }
    }
}

struct Header {
    format: Format,
    vertex_count: usize,
    /// (name, type) per vertex property, in declaration order.
    properties: Vec<(String, Scalar)>,
    /// True when elements other than the vertex element follow.
    trailing_elements: bool,
    header_lines: usize,
}

fn parse_header<R: BufRead>(reader: &mut R) -> Result<Header, PlyError> {
    let mut line = String::new();
    let mut line_no = 1usize;
    reader.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(PlyError::Parse { line: 1, message: "missing 'ply' magic".into() });
    }

    let mut format = None;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex_element = false;
    let mut trailing_elements = false;

    loop {
        line.clear();
        line_no += 1;
        if reader.read_line(&mut line)? == 0 {
            return Err(PlyError::Parse { line: line_no, message: "unexpected end of header".into() });
        }
        let trimmed = line.trim_end();
        let mut words = trimmed.split_whitespace();
        match words.next() {
            Some("comment") => {}
            Some("format") => {
                format = Some(match words.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLittleEndian,
                    Some(other) => return Err(PlyError::Unsupported(format!("format '{other}'"))),
                    None => return Err(PlyError::Parse { line: line_no, message: "format line without kind".into() }),
                });
            }
            Some("element") => {
                let name = words.next().unwrap_or("");
                if name == "vertex" {
                    let count: usize = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| PlyError::Parse { line: line_no, message: "bad vertex count".into() })?;
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else {
                    in_vertex_element = false;
                    trailing_elements = true;
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    continue;
                }
                let kind = words.next().unwrap_or("");
                if kind == "list" {
                    return Err(PlyError::Unsupported("list property on vertex element".into()));
                }
                let scalar = Scalar::parse(kind)
                    .ok_or_else(|| PlyError::Unsupported(format!("property type '{kind}'")))?;
                let name = words
                    .next()
                    .ok_or_else(|| PlyError::Parse { line: line_no, message: "property without name".into() })?;
                properties.push((name.to_string(), scalar));
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(PlyError::Parse { line: line_no, message: format!("unrecognized keyword '{other}'") })
            }
            None => {}
        }
    }

    let format = format.ok_or(PlyError::Parse { line: line_no, message: "no format line".into() })?;
    let vertex_count = vertex_count.ok_or(PlyError::Parse { line: line_no, message: "no vertex element".into() })?;
    Ok(Header { format, vertex_count, properties, trailing_elements, header_lines: line_no + 1 })
}

struct Layout {
    xyz: [usize; 3],
    rgb: [usize; 3],
}

fn locate_properties(header: &Header) -> Result<Layout, PlyError> {
    let find = |name: &str| header.properties.iter().position(|(n, _)| n == name);
    let mut xyz = [0usize; 3];
    for (i, name) in ["x", "y", "z"].iter().enumerate() {
        let idx = find(name).ok_or_else(|| PlyError::Unsupported(format!("missing vertex property '{name}'")))?;
        let ty = header.properties[idx].1;
        if ty != Scalar::F32 && ty != Scalar::F64 {
            return Err(PlyError::Unsupported(format!("property '{name}' must be float or double")));
        }
        xyz[i] = idx;
    }
    let mut rgb = [0usize; 3];
    for (i, name) in ["red", "green", "blue"].iter().enumerate() {
        let idx = find(name).ok_or_else(|| PlyError::Unsupported(format!("missing vertex property '{name}'")))?;
        if header.properties[idx].1 != Scalar::U8 {
            return Err(PlyError::Unsupported(format!("property '{name}' must be uchar")));
        }
        rgb[i] = idx;
    }
    Ok(Layout { xyz, rgb })
}

/// Load a point cloud; colors are normalized from 8-bit to [0, 1]. The splat
/// radius is not stored in the file and is set to the caller's value.
pub fn load_ply(path: &Path, point_radius_px: f64) -> Result<GuidancePointCloud, PlyError> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let header = parse_header(&mut reader)?;
    let layout = locate_properties(&header)?;

    let mut points = Vec::with_capacity(header.vertex_count);
    match header.format {
        Format::Ascii => {
            let mut line = String::new();
            for row in 0..header.vertex_count {
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    return Err(PlyError::Parse {
                        line: header.header_lines + row,
                        message: "unexpected end of vertex data".into(),
                    });
                }
                let fields: Vec<f64> = line
                    .split_whitespace()
                    .map(|w| w.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| PlyError::Parse {
                        line: header.header_lines + row,
                        message: format!("bad number: {e}"),
                    })?;
                if fields.len() != header.properties.len() {
                    return Err(PlyError::Parse {
                        line: header.header_lines + row,
                        message: format!("expected {} fields, got {}", header.properties.len(), fields.len()),
                    });
                }
                points.push(decode_point(&fields, &layout));
            }
        }
        Format::BinaryLittleEndian => {
            let stride: usize = header.properties.iter().map(|(_, t)| t.size()).sum();
            let mut buf = vec![0u8; stride];
            for row in 0..header.vertex_count {
                reader.read_exact(&mut buf).map_err(|_| PlyError::Parse {
                    line: header.header_lines,
                    message: format!("vertex data truncated at row {row}"),
                })?;
                let mut fields = Vec::with_capacity(header.properties.len());
                let mut off = 0;
                for (_, ty) in &header.properties {
                    fields.push(ty.read_le(&buf[off..off + ty.size()]));
                    off += ty.size();
                }
                points.push(decode_point(&fields, &layout));
            }
        }
    }
    if header.trailing_elements {
        log::debug!("{}: ignoring non-vertex elements", path.display());
    }
    Ok(GuidancePointCloud::new(points, point_radius_px))
}

fn decode_point(fields: &[f64], layout: &Layout) -> (Vec3, [f64; 3]) {
    let p = Vec3::new(fields[layout.xyz[0]], fields[layout.xyz[1]], fields[layout.xyz[2]]);
    let c = [
        fields[layout.rgb[0]] / 255.0,
        fields[layout.rgb[1]] / 255.0,
        fields[layout.rgb[2]] / 255.0,
    ];
    (p, c)
}

/// Write a point cloud as binary little-endian PLY with float positions and
/// uchar colors.
pub fn save_ply(path: &Path, pc: &GuidancePointCloud) -> Result<(), PlyError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        pc.points().len()
    )?;
    for (p, c) in pc.points() {
        for v in [p.x, p.y, p.z] {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
        for v in c {
            out.write_all(&[(255.0 * v.clamp(0.0, 1.0)).round() as u8])?;
        }
    }
    out.flush()?;
    Ok(())
}
