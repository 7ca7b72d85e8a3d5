//! Labelled samples `(position, ŝ) -> F` and their on-disk format.
//!
//! Each Sun direction contributes `n_uniform` plane points drawn uniformly
//! on `[-1, 1]^2` and `n_border` points scattered around the silhouette
//! border. Samples are stored direction by direction, in generation order.
//!
//! File layout: a UTF-8 header of `key value` lines ending with `end`,
//! followed by `samples` fixed-width records of seven little-endian `f64`
//! (`px py pz sx sy sz f`). The `sha256` header line covers every other
//! header line and the record block.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eclipse::{
    eclipse_function, extract_boundary, EclipseError, ProjectionFrame, SilhouetteBoundary, Vec2,
};
use crate::geometry::{fibonacci_sphere, TriangleMesh, Vec3};

pub const FORMAT_NAME: &str = "eclipsenet-dataset";
pub const FORMAT_VERSION: u32 = 1;
const RECORD_LEN: usize = 7 * 8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("dataset header: {0}")]
    Header(String),
    #[error("dataset format version {found}, expected {FORMAT_VERSION}")]
    Version { found: u32 },
    #[error("dataset truncated: header announces {expected} bytes of records, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dataset checksum mismatch")]
    Checksum,
    #[error("direction {direction}: {source}")]
    Direction {
        direction: usize,
        source: EclipseError,
    },
    #[error("invalid sampling configuration: {0}")]
    Config(String),
}

/// One labelled input. `position` is the lifted plane point `x·û + y·v̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EclipseSample {
    pub position: Vec3,
    pub s_hat: Vec3,
    pub f_value: f64,
}

impl EclipseSample {
    /// Network input `(px, py, pz, sx, sy, sz)`.
    pub fn input(&self) -> [f64; 6] {
        [
            self.position.x,
            self.position.y,
            self.position.z,
            self.s_hat.x,
            self.s_hat.y,
            self.s_hat.z,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            _ => None,
        }
    }

    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Valid => 1,
        }
    }
}

/// Per-direction sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub n_uniform: usize,
    pub n_border: usize,
    /// Standard deviation of the 2D Gaussian offset around border points.
    pub border_sigma: f64,
    /// Resolution of the silhouette grid used for labelling.
    pub boundary_grid: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_uniform: 1000,
            n_border: 3000,
            border_sigma: 0.05,
            boundary_grid: 256,
        }
    }
}

impl SamplingConfig {
    pub fn per_direction(&self) -> usize {
        self.n_uniform + self.n_border
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EclipseDataset {
    pub body_name: String,
    pub split: Split,
    pub seed: u64,
    pub n_directions: usize,
    pub n_uniform: usize,
    pub n_border: usize,
    pub samples: Vec<EclipseSample>,
}

impl EclipseDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sun direction of each block of `n_uniform + n_border` samples.
    pub fn directions(&self) -> Vec<Vec3> {
        let per = self.n_uniform + self.n_border;
        if per == 0 {
            return Vec::new();
        }
        self.samples.chunks(per).map(|c| c[0].s_hat).collect()
    }

    /// CSV with header `px,py,pz,sx,sy,sz,f`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 120 + 32);
        out.push_str("px,py,pz,sx,sy,sz,f\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                s.position.x,
                s.position.y,
                s.position.z,
                s.s_hat.x,
                s.s_hat.y,
                s.s_hat.z,
                s.f_value
            );
        }
        out
    }

    fn header_lines(&self, count: usize) -> String {
        format!(
            "{FORMAT_NAME}\nversion {FORMAT_VERSION}\nbody {}\nsplit {}\nseed {}\ndirections {}\nuniform {}\nborder {}\nsamples {}\n",
            self.body_name,
            self.split.as_str(),
            self.seed,
            self.n_directions,
            self.n_uniform,
            self.n_border,
            count
        )
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, DatasetError> {
        if self.body_name.is_empty() || self.body_name.contains(char::is_whitespace) {
            return Err(DatasetError::Header(format!(
                "body name {:?} must be one non-empty word",
                self.body_name
            )));
        }
        let header = self.header_lines(self.samples.len());
        let mut body = Vec::with_capacity(self.samples.len() * RECORD_LEN);
        for s in &self.samples {
            for v in s.input().iter().chain(std::iter::once(&s.f_value)) {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = checksum(&header, &body);
        let mut out = header.into_bytes();
        out.extend_from_slice(format!("sha256 {digest}\nend\n").as_bytes());
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let header_err = |m: &str| DatasetError::Header(m.to_string());
        let mut fields: Vec<(String, String)> = Vec::new();
        let mut pos = 0;
        let mut first = true;
        loop {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| header_err("unterminated header"))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end])
                .map_err(|_| header_err("header is not UTF-8"))?;
            pos += end + 1;
            if first {
                if line != FORMAT_NAME {
                    return Err(header_err("not a dataset file"));
                }
                first = false;
                continue;
            }
            if line == "end" {
                break;
            }
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| DatasetError::Header(format!("malformed line {line:?}")))?;
            fields.push((k.to_string(), v.to_string()));
        }
        let get = |key: &str| -> Result<&str, DatasetError> {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| DatasetError::Header(format!("missing `{key}`")))
        };
        let num = |key: &str| -> Result<u64, DatasetError> {
            get(key)?
                .parse()
                .map_err(|_| DatasetError::Header(format!("`{key}` is not an integer")))
        };
        let version = num("version")? as u32;
        if version != FORMAT_VERSION {
            return Err(DatasetError::Version { found: version });
        }
        let split = Split::parse(get("split")?).ok_or_else(|| header_err("unknown split"))?;
        let mut ds = EclipseDataset {
            body_name: get("body")?.to_string(),
            split,
            seed: num("seed")?,
            n_directions: num("directions")? as usize,
            n_uniform: num("uniform")? as usize,
            n_border: num("border")? as usize,
            samples: Vec::new(),
        };
        let count = num("samples")? as usize;
        let expected = count
            .checked_mul(RECORD_LEN)
            .ok_or_else(|| header_err("sample count overflows"))?;
        let body = &bytes[pos..];
        if body.len() != expected {
            return Err(DatasetError::Truncated {
                expected,
                found: body.len(),
            });
        }
        let digest = get("sha256")?;
        if checksum(&ds.header_lines(count), body) != digest {
            return Err(DatasetError::Checksum);
        }
        ds.samples = body
            .chunks_exact(RECORD_LEN)
            .map(|rec| {
                let v = |k: usize| f64::from_le_bytes(rec[8 * k..8 * k + 8].try_into().unwrap());
                EclipseSample {
                    position: Vec3::new(v(0), v(1), v(2)),
                    s_hat: Vec3::new(v(3), v(4), v(5)),
                    f_value: v(6),
                }
            })
            .collect();
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_dataset(ds: &EclipseDataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    ds.save(path)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EclipseDataset, DatasetError> {
    EclipseDataset::load(path)
}

fn checksum(header: &str, body: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(header.as_bytes());
    h.update(body);
    let mut hex = String::with_capacity(64);
    for b in h.finalize() {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

/// Samples for one Sun direction, labelled with [`eclipse_function`].
pub fn sample_direction(
    frame: &ProjectionFrame,
    boundary: &SilhouetteBoundary,
    mesh: &TriangleMesh,
    n_uniform: usize,
    n_border: usize,
    border_sigma: f64,
    rng_seed: u64,
) -> Vec<EclipseSample> {
    assert!(border_sigma > 0.0, "border_sigma must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let gauss = Normal::new(0.0, border_sigma).expect("positive sigma");
    let label = |xy: Vec2| EclipseSample {
        position: frame.lift(&xy),
        s_hat: frame.s_hat,
        f_value: eclipse_function(&xy, boundary, frame, mesh),
    };
    let mut out = Vec::with_capacity(n_uniform + n_border);
    for _ in 0..n_uniform {
        let xy = Vec2::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
        out.push(label(xy));
    }
    let points = boundary.points();
    for _ in 0..n_border {
        let base = points[rng.random_range(0..points.len())];
        let xy = base + Vec2::new(gauss.sample(&mut rng), gauss.sample(&mut rng));
        out.push(label(xy));
    }
    out
}

/// Seed of direction `index` in `split`.
fn direction_seed(seed: u64, split: Split, index: usize) -> u64 {
    let mut z = seed
        ^ split.index().wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One split: `n_dirs` Fibonacci directions with offset seed `offset_seed`.
pub fn build_split(
    mesh: &TriangleMesh,
    body_name: &str,
    split: Split,
    n_dirs: usize,
    offset_seed: u64,
    config: &SamplingConfig,
    seed: u64,
) -> Result<EclipseDataset, DatasetError> {
    if n_dirs == 0 {
        return Err(DatasetError::Config(
            "direction count must be at least 1".into(),
        ));
    }
    if !(config.border_sigma > 0.0 && config.border_sigma.is_finite()) {
        return Err(DatasetError::Config(format!(
            "border_sigma {} must be positive",
            config.border_sigma
        )));
    }
    let mut samples = Vec::with_capacity(n_dirs * config.per_direction());
    for (index, s_hat) in fibonacci_sphere(n_dirs, offset_seed)
        .into_iter()
        .enumerate()
    {
        let wrap = |source| DatasetError::Direction {
            direction: index,
            source,
        };
        let frame = ProjectionFrame::new(s_hat).map_err(wrap)?;
        let boundary = extract_boundary(&frame, mesh, config.boundary_grid).map_err(wrap)?;
        samples.extend(sample_direction(
            &frame,
            &boundary,
            mesh,
            config.n_uniform,
            config.n_border,
            config.border_sigma,
            direction_seed(seed, split, index),
        ));
    }
    Ok(EclipseDataset {
        body_name: body_name.to_string(),
        split,
        seed,
        n_directions: n_dirs,
        n_uniform: config.n_uniform,
        n_border: config.n_border,
        samples,
    })
}

/// Training and validation sets. Their Fibonacci spirals use offset seeds
/// `2·seed` and `2·seed + 1`, so no direction is shared.
pub fn build_dataset(
    mesh: &TriangleMesh,
    body_name: &str,
    n_train_dirs: usize,
    n_valid_dirs: usize,
    config: &SamplingConfig,
    seed: u64,
) -> Result<(EclipseDataset, EclipseDataset), DatasetError> {
    let offset = seed.wrapping_mul(2);
    let train = build_split(
        mesh,
        body_name,
        Split::Train,
        n_train_dirs,
        offset,
        config,
        seed,
    )?;
    let valid = build_split(
        mesh,
        body_name,
        Split::Valid,
        n_valid_dirs,
        offset.wrapping_add(1),
        config,
        seed,
    )?;
    Ok((train, valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    fn small() -> SamplingConfig {
        SamplingConfig {
            n_uniform: 40,
            n_border: 60,
            border_sigma: 0.05,
            boundary_grid: 64,
        }
    }

    #[test]
    fn counts_and_shapes() {
        let sphere = shapes::icosphere(2);
        let (train, valid) = build_dataset(&sphere, "sphere", 3, 2, &small(), 7).unwrap();
        assert_eq!(train.len(), 300);
        assert_eq!(valid.len(), 200);
        assert_eq!(train.directions().len(), 3);
        for s in &train.samples {
            assert!((s.s_hat.norm() - 1.0).abs() < 1e-9);
            assert!(s.position.dot(&s.s_hat).abs() < 1e-12);
            assert!(s.f_value.is_finite());
        }
    }

    #[test]
    fn byte_round_trip() {
        let sphere = shapes::icosphere(1);
        let (train, _) = build_dataset(&sphere, "sphere", 2, 1, &small(), 3).unwrap();
        let bytes = train.to_bytes().unwrap();
        assert_eq!(EclipseDataset::from_bytes(&bytes).unwrap(), train);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let sphere = shapes::icosphere(1);
        let (train, _) = build_dataset(&sphere, "sphere", 1, 1, &small(), 3).unwrap();
        let bytes = train.to_bytes().unwrap();
        assert!(matches!(
            EclipseDataset::from_bytes(&bytes[..bytes.len() - 3]),
            Err(DatasetError::Truncated { .. })
        ));
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(matches!(
            EclipseDataset::from_bytes(&flipped),
            Err(DatasetError::Checksum)
        ));
        let mut v = bytes.clone();
        let at = v.windows(9).position(|w| w == b"version 1").unwrap();
        v[at + 8] = b'9';
        assert!(matches!(
            EclipseDataset::from_bytes(&v),
            Err(DatasetError::Version { found: 9 })
        ));
    }

    #[test]
    fn header_only_file_is_an_empty_dataset() {
        let empty = EclipseDataset {
            body_name: "none".into(),
            split: Split::Valid,
            seed: 0,
            n_directions: 0,
            n_uniform: 0,
            n_border: 0,
            samples: Vec::new(),
        };
        let back = EclipseDataset::from_bytes(&empty.to_bytes().unwrap()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, empty);
    }

    #[test]
    fn csv_header() {
        let sphere = shapes::icosphere(1);
        let (train, _) = build_dataset(&sphere, "sphere", 1, 1, &small(), 0).unwrap();
        let csv = train.to_csv();
        assert!(csv.starts_with("px,py,pz,sx,sy,sz,f\n"));
        assert_eq!(csv.lines().count(), train.len() + 1);
    }
}
