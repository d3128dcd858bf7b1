//! Minimal PLY reader/writer covering triangle meshes.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Raw contents of a PLY triangle mesh.
#[derive(Debug, Clone, Default)]
pub struct PlyData {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<Vec<u32>>,
    /// Integer-valued scalar face properties, e.g. `building_id`.
    pub face_props: BTreeMap<String, Vec<i64>>,
}

enum Source<R: BufRead> {
    Ascii(std::vec::IntoIter<String>, R),
    Binary(R, bool),
}

impl<R: BufRead> Source<R> {
    fn next_value(&mut self, ty: Scalar) -> std::result::Result<f64, String> {
        match self {
            Source::Ascii(tokens, reader) => loop {
                if let Some(tok) = tokens.next() {
                    return tok
                        .parse::<f64>()
                        .map_err(|_| format!("bad number {tok:?}"));
                }
                let mut line = String::new();
                let n = reader.read_line(&mut line).map_err(|e| e.to_string())?;
                if n == 0 {
                    return Err("unexpected end of file".into());
                }
                *tokens = line
                    .split_whitespace()
                    .map(str::to_owned)
                    .collect::<Vec<_>>()
                    .into_iter();
            },
            Source::Binary(reader, big_endian) => {
                let mut buf = [0u8; 8];
                let n = ty.size();
                reader
                    .read_exact(&mut buf[..n])
                    .map_err(|_| "unexpected end of file".to_string())?;
                if *big_endian {
                    buf[..n].reverse();
                }
                let b = &buf;
                Ok(match ty {
                    Scalar::I8 => b[0] as i8 as f64,
                    Scalar::U8 => b[0] as f64,
                    Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
                    Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
                    Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::F64 => f64::from_le_bytes(*b),
                })
            }
        }
    }
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let err = |msg: String| Error::parse(path, msg);

    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    if line.trim_end() != "ply" {
        return Err(err("missing 'ply' magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(err("unterminated header".into()));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", f, _version] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    other => return Err(err(format!("unknown format {other}"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| err(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err("property before element".into()))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count)
                        .ok_or_else(|| err(format!("bad type {count}")))?,
                    item: Scalar::parse(item).ok_or_else(|| err(format!("bad type {item}")))?,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err("property before element".into()))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty).ok_or_else(|| err(format!("bad type {ty}")))?,
                });
            }
            ["end_header"] => break,
            _ => return Err(err(format!("unrecognized header line {:?}", line.trim_end()))),
        }
    }
    let format = format.ok_or_else(|| err("missing format line".into()))?;
    let mut src = match format {
        Format::Ascii => Source::Ascii(Vec::new().into_iter(), reader),
        Format::BinaryLe => Source::Binary(reader, false),
        Format::BinaryBe => Source::Binary(reader, true),
    };

    let mut data = PlyData::default();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let xyz: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|n| el.props.iter().position(|p| p.name() == *n))
            .collect();
        if is_vertex && xyz.iter().any(Option::is_none) {
            return Err(err("vertex element lacks x/y/z".into()));
        }
        let mut scalars = vec![0f64; el.props.len()];
        for _ in 0..el.count {
            let mut list: Option<Vec<u32>> = None;
            for (pi, prop) in el.props.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        scalars[pi] = src.next_value(*ty).map_err(&err)?;
                    }
                    Property::List { name, count, item } => {
                        let n = src.next_value(*count).map_err(&err)? as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            let v = src.next_value(*item).map_err(&err)?;
                            if v < 0.0 {
                                return Err(err(format!("negative vertex index {v}")));
                            }
                            items.push(v as u32);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            list = Some(items);
                        }
                    }
                }
            }
            if is_vertex {
                data.vertices.push(Point3::new(
                    scalars[xyz[0].unwrap()],
                    scalars[xyz[1].unwrap()],
                    scalars[xyz[2].unwrap()],
                ));
            } else if is_face {
                data.faces
                    .push(list.ok_or_else(|| err("face element lacks vertex_indices".into()))?);
                for (pi, prop) in el.props.iter().enumerate() {
                    if let Property::Scalar { name, .. } = prop {
                        data.face_props
                            .entry(name.clone())
                            .or_default()
                            .push(scalars[pi] as i64);
                    }
                }
            }
        }
    }
    Ok(data)
}

pub fn write_ply(
    path: &Path,
    vertices: &[Point3<f64>],
    triangles: &[[u32; 3]],
    building_ids: Option<&[i32]>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", vertices.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    header.push_str(&format!("element face {}\n", triangles.len()));
    header.push_str("property list uchar int vertex_indices\n");
    if building_ids.is_some() {
        header.push_str("property int building_id\n");
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes()).map_err(io)?;
    for v in vertices {
        for c in [v.x, v.y, v.z] {
            w.write_all(&c.to_le_bytes()).map_err(io)?;
        }
    }
    for (i, t) in triangles.iter().enumerate() {
        w.write_all(&[3u8]).map_err(io)?;
        for &idx in t {
            w.write_all(&(idx as i32).to_le_bytes()).map_err(io)?;
        }
        if let Some(ids) = building_ids {
            w.write_all(&ids[i].to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_ascii_with_quad_and_extra_props() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ply");
        std::fs::write(
            &p,
            "ply\nformat ascii 1.0\ncomment hi\nelement vertex 4\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\n\
             property int building_id\nend_header\n0 0 0 1\n1 0 0 2\n1 1 0 3\n0 1 0 4\n4 0 1 2 3 7\n",
        )
        .unwrap();
        let d = read_ply(&p).unwrap();
        assert_eq!(d.vertices.len(), 4);
        assert_eq!(d.faces, vec![vec![0, 1, 2, 3]]);
        assert_eq!(d.face_props["building_id"], vec![7]);
    }

    #[test]
    fn truncated_binary_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.ply");
        std::fs::write(
            &p,
            b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n\0\0",
        )
        .unwrap();
        assert!(read_ply(&p).is_err());
    }
}
