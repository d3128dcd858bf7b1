use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};

/// Read positions and polygon faces from a Wavefront OBJ file.
pub(super) fn read_obj(path: &Path) -> Result<(Vec<Point3<f64>>, Vec<Vec<u32>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        let err = |msg: &str| Error::parse(path, format!("line {}: {msg}", lineno + 1));
        match toks.next() {
            Some("v") => {
                let c: Vec<f64> = toks
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err("bad vertex coordinate"))?;
                if c.len() != 3 {
                    return Err(err("vertex needs 3 coordinates"));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut face = Vec::new();
                for tok in toks {
                    let idx: i64 = tok
                        .split('/')
                        .next()
                        .unwrap_or("")
                        .parse()
                        .map_err(|_| err("bad face index"))?;
                    let resolved = if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        idx - 1
                    };
                    if resolved < 0 {
                        return Err(err("face index out of range"));
                    }
                    face.push(resolved as u32);
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}
