//! Model files: a `key value` text header closed by `end`, then every
//! parameter as a little-endian `f64`, layer by layer, row-major `W`
//! followed by `b`.

use std::path::Path;

use super::{init_model, Activation, EpochLoss, MlpConfig, MlpModel, NetError};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "eclipsenet-model";

fn header(model: &MlpModel) -> String {
    let c = model.config();
    let hidden: Vec<String> = c.hidden.iter().map(|w| w.to_string()).collect();
    let mut out = format!(
        "{MAGIC}\nversion {MODEL_FORMAT_VERSION}\nactivation {}\nw0 {:?}\ninput {}\nhidden {}\noutput {}\ninit_seed {}\nraw_positions {}\nhistory {}\n",
        c.activation.as_str(),
        c.w0,
        c.input_dim,
        if hidden.is_empty() { "-".to_string() } else { hidden.join(",") },
        c.output_dim,
        c.init_seed,
        c.raw_positions,
        model.history.len()
    );
    for h in &model.history {
        let valid = h.valid_mse.map_or("-".to_string(), |v| format!("{v:?}"));
        out.push_str(&format!(
            "epoch {} {:?} {:?} {valid}\n",
            h.epoch, h.lr, h.train_mse
        ));
    }
    out.push_str(&format!("params {}\nend\n", model.param_count()));
    out
}

pub fn model_to_bytes(model: &MlpModel) -> Vec<u8> {
    let mut out = header(model).into_bytes();
    for p in model.params_flat() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MlpModel, NetError> {
    let fmt = |m: String| NetError::Format(m);
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| fmt("unterminated header".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| fmt("header is not UTF-8".into()))?
            .to_string();
        pos += end + 1;
        if line == "end" {
            break;
        }
        lines.push(line);
    }
    if lines.first().map(String::as_str) != Some(MAGIC) {
        return Err(fmt("not a model file".into()));
    }
    let mut fields = Vec::new();
    let mut history = Vec::new();
    for line in &lines[1..] {
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| fmt(format!("malformed line {line:?}")))?;
        if k == "epoch" {
            let parts: Vec<&str> = v.split(' ').collect();
            let bad = || fmt(format!("malformed history line {line:?}"));
            if parts.len() != 4 {
                return Err(bad());
            }
            history.push(EpochLoss {
                epoch: parts[0].parse().map_err(|_| bad())?,
                lr: parts[1].parse().map_err(|_| bad())?,
                train_mse: parts[2].parse().map_err(|_| bad())?,
                valid_mse: match parts[3] {
                    "-" => None,
                    s => Some(s.parse().map_err(|_| bad())?),
                },
            });
        } else {
            fields.push((k, v));
        }
    }
    let get = |key: &str| -> Result<&str, NetError> {
        fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| NetError::Format(format!("missing `{key}`")))
    };
    let int = |key: &str| -> Result<usize, NetError> {
        get(key)?
            .parse()
            .map_err(|_| NetError::Format(format!("`{key}` is not an integer")))
    };
    let version = int("version")? as u32;
    if version != MODEL_FORMAT_VERSION {
        return Err(NetError::Version { found: version });
    }
    let hidden = match get("hidden")? {
        "-" => Vec::new(),
        s => s
            .split(',')
            .map(|w| w.parse().map_err(|_| fmt(format!("bad width {w:?}"))))
            .collect::<Result<Vec<usize>, _>>()?,
    };
    let config = MlpConfig {
        input_dim: int("input")?,
        hidden,
        output_dim: int("output")?,
        activation: Activation::parse(get("activation")?)
            .ok_or_else(|| fmt("unknown activation".into()))?,
        w0: get("w0")?.parse().map_err(|_| fmt("bad w0".into()))?,
        init_seed: get("init_seed")?
            .parse()
            .map_err(|_| fmt("bad init_seed".into()))?,
        raw_positions: get("raw_positions")?
            .parse()
            .map_err(|_| fmt("bad raw_positions".into()))?,
    };
    if int("history")? != history.len() {
        return Err(fmt("history length does not match its entries".into()));
    }
    let count = int("params")?;
    if count != config.param_count() {
        return Err(NetError::Shape(format!(
            "header announces {count} parameters, configuration implies {}",
            config.param_count()
        )));
    }
    let body = &bytes[pos..];
    if body.len() != count * 8 {
        return Err(fmt(format!(
            "parameter block has {} bytes, expected {}",
            body.len(),
            count * 8
        )));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if !params.iter().all(|p| p.is_finite()) {
        return Err(fmt("non-finite parameter".into()));
    }
    let mut model = init_model(&config)?;
    model.set_params_flat(&params)?;
    model.history = history;
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<(), NetError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model)).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel, NetError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_bytes(&bytes)
}

/// Loads a model and checks that its layer widths are those of `expected`.
pub fn load_model_expecting(
    path: impl AsRef<Path>,
    expected: &MlpConfig,
) -> Result<MlpModel, NetError> {
    let model = load_model(path)?;
    if model.config().layer_dims() != expected.layer_dims()
        || model.config().activation != expected.activation
    {
        return Err(NetError::Shape(format!(
            "file holds {:?} {:?}, expected {:?} {:?}",
            model.config().activation,
            model.config().layer_dims(),
            expected.activation,
            expected.layer_dims()
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::train_arrays;
    use crate::neuralnet::TrainConfig;

    #[test]
    fn bytes_round_trip_with_history() {
        let mut m = init_model(&MlpConfig::eclipse(vec![5, 3], Activation::Sine, 9)).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let x = [
            [0.1, 0.2, 0.3, 0.0, 0.0, 1.0],
            [0.4, -0.2, 0.0, 1.0, 0.0, 0.0],
        ];
        train_arrays(&mut m, &x, &[0.5, -0.5], &cfg, Some((&x, &[0.5, -0.5]))).unwrap();
        let back = model_from_bytes(&model_to_bytes(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupted_length_field_is_rejected() {
        let m = init_model(&MlpConfig::small(Activation::Rectifier, 1)).unwrap();
        let bytes = model_to_bytes(&m);
        let text = String::from_utf8_lossy(&bytes).to_string();
        let at = text.find("params 2369").unwrap();
        let mut bad = bytes.clone();
        bad[at + "params 236".len()] = b'8';
        assert!(model_from_bytes(&bad).is_err());
        assert!(model_from_bytes(&bytes[..bytes.len() - 8]).is_err());
    }
}
