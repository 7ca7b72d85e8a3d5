//! Minimal Wavefront OBJ reader: `v` and `f` records only.

use super::{GeometryError, Vec3};

pub(super) struct RawObj {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

pub(super) fn parse(text: &str) -> Result<RawObj, GeometryError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in xyz.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| GeometryError::Parse {
                        line: line_no,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *c = tok.parse::<f64>().map_err(|e| GeometryError::Parse {
                        line: line_no,
                        message: format!("bad coordinate {tok:?}: {e}"),
                    })?;
                    if !c.is_finite() {
                        return Err(GeometryError::NonFinite { line: line_no });
                    }
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut idx = Vec::with_capacity(4);
                for tok in tokens {
                    // `i`, `i/t`, `i//n`, `i/t/n`
                    let head = tok.split('/').next().unwrap_or("");
                    let raw: i64 = head.parse().map_err(|e| GeometryError::Parse {
                        line: line_no,
                        message: format!("bad face index {tok:?}: {e}"),
                    })?;
                    let resolved = match raw {
                        0 => {
                            return Err(GeometryError::Parse {
                                line: line_no,
                                message: "face index 0 is invalid (indices are 1-based)".into(),
                            })
                        }
                        r if r > 0 => r - 1,
                        r => vertices.len() as i64 + r,
                    };
                    if resolved < 0 {
                        return Err(GeometryError::IndexOutOfRange {
                            triangle: triangles.len(),
                            index: resolved,
                            vertex_count: vertices.len(),
                        });
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(GeometryError::Parse {
                        line: line_no,
                        message: "face needs at least three vertices".into(),
                    });
                }
                // Fan triangulation for polygons.
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(RawObj {
        vertices,
        triangles,
    })
}
