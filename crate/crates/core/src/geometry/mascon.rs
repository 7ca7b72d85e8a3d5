//! Point-mass (mascon) gravity models.

use std::fmt::Write as _;
use std::path::Path;

use super::{point_in_polyhedron, GeometryError, TriangleMesh, Vec3};

/// Point masses in normalized units. Masses sum to one so that with
/// `G * M_total = 1` the gravitational parameter is the mass itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MasconModel {
    positions: Vec<Vec3>,
    masses: Vec<f64>,
    total_mass_kg: f64,
}

impl MasconModel {
    /// Builds a model, rescaling `masses` to unit sum when they are not
    /// already normalized to within `1e-12`.
    pub fn new(
        positions: Vec<Vec3>,
        masses: Vec<f64>,
        total_mass_kg: f64,
    ) -> Result<Self, GeometryError> {
        if positions.is_empty() {
            return Err(GeometryError::MasconFormat("no mascons".into()));
        }
        if positions.len() != masses.len() {
            return Err(GeometryError::MasconFormat(format!(
                "{} positions but {} masses",
                positions.len(),
                masses.len()
            )));
        }
        if let Some(i) = masses.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(GeometryError::MasconFormat(format!(
                "mascon {i} has non-positive or non-finite mass {}",
                masses[i]
            )));
        }
        if let Some(i) = positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::MasconFormat(format!(
                "mascon {i} has a non-finite position"
            )));
        }
        let sum = compensated_sum(masses.iter().copied());
        let masses = if (sum - 1.0).abs() > 1e-12 {
            masses.into_iter().map(|m| m / sum).collect()
        } else {
            masses
        };
        Ok(Self {
            positions,
            masses,
            total_mass_kg,
        })
    }

    /// A single unit mass at `position`.
    pub fn point_mass(position: Vec3, total_mass_kg: f64) -> Self {
        Self {
            positions: vec![position],
            masses: vec![1.0],
            total_mass_kg,
        }
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total_mass_kg(&self) -> f64 {
        self.total_mass_kg
    }

    /// Sum of normalized masses (compensated summation).
    pub fn normalized_mass_sum(&self) -> f64 {
        compensated_sum(self.masses.iter().copied())
    }

    pub fn center_of_mass(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        for (p, m) in self.positions.iter().zip(&self.masses) {
            acc += p * *m;
        }
        acc / self.normalized_mass_sum()
    }

    /// CSV with header `x,y,z,m`, shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 80);
        out.push_str("x,y,z,m\n");
        for (p, m) in self.positions.iter().zip(&self.masses) {
            let _ = writeln!(out, "{:?},{:?},{:?},{:?}", p.x, p.y, p.z, m);
        }
        out
    }

    pub fn from_csv(text: &str, total_mass_kg: f64) -> Result<Self, GeometryError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim().replace(' ', "") == "x,y,z,m" => {}
            _ => {
                return Err(GeometryError::MasconFormat(
                    "missing `x,y,z,m` header".into(),
                ))
            }
        }
        let mut positions = Vec::new();
        let mut masses = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(GeometryError::MasconFormat(format!(
                    "line {}: expected 4 fields, found {}",
                    i + 1,
                    fields.len()
                )));
            }
            let mut vals = [0.0; 4];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f.parse().map_err(|e| {
                    GeometryError::MasconFormat(format!("line {}: {f:?}: {e}", i + 1))
                })?;
            }
            positions.push(Vec3::new(vals[0], vals[1], vals[2]));
            masses.push(vals[3]);
        }
        Self::new(positions, masses, total_mass_kg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|source| GeometryError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>, total_mass_kg: f64) -> Result<Self, GeometryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GeometryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(&text, total_mass_kg)
    }
}

fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    // Neumaier summation.
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Uniform-density mascons at the centers of the `grid_n^3` bounding-box
/// cells whose centers lie inside the mesh; every mascon gets mass
/// `1 / N_inside`.
pub fn generate_mascons_voxel(
    mesh: &TriangleMesh,
    grid_n: usize,
    total_mass_kg: f64,
) -> Result<MasconModel, GeometryError> {
    if grid_n < 2 {
        return Err(GeometryError::GridTooCoarse(grid_n));
    }
    let open_edges = mesh.open_edge_count();
    if open_edges > 0 {
        return Err(GeometryError::NotWatertight { open_edges });
    }
    let (lo, hi) = mesh.bounding_box();
    let cell = (hi - lo) / grid_n as f64;
    let mut positions = Vec::new();
    for k in 0..grid_n {
        for j in 0..grid_n {
            for i in 0..grid_n {
                let p = lo
                    + Vec3::new(
                        (i as f64 + 0.5) * cell.x,
                        (j as f64 + 0.5) * cell.y,
                        (k as f64 + 0.5) * cell.z,
                    );
                if point_in_polyhedron(&p, mesh)? {
                    positions.push(p);
                }
            }
        }
    }
    if positions.is_empty() {
        return Err(GeometryError::NoInteriorCells);
    }
    let m = 1.0 / positions.len() as f64;
    let masses = vec![m; positions.len()];
    Ok(MasconModel {
        positions,
        masses,
        total_mass_kg,
    })
}
