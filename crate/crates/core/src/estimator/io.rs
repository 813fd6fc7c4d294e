use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{ConvBlock, ModelConfig, ModelParams, CONV_BLOCKS, INPUT_CHANNELS};
use super::EstimatorError;
use crate::nn::weights::{read_layers, write_layers, LayerParams};
use crate::strip::STRIP_HEIGHT;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EstimatorError + '_ {
    move |source| EstimatorError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_weights<W: Write>(w: W, params: &ModelParams<f32>) -> Result<(), EstimatorError> {
    let mut layers = Vec::new();
    for b in &params.blocks {
        layers.push(LayerParams::Conv2d(b.conv.clone()));
        layers.push(LayerParams::BatchNorm(b.bn.clone()));
    }
    layers.push(LayerParams::Linear(params.fc1.clone()));
    layers.push(LayerParams::Linear(params.fc2.clone()));
    write_layers(w, &layers)?;
    Ok(())
}

/// Reads a weight file and rebuilds the network, checking that the layer
/// sequence and shapes form a valid topology for 32-pixel-high input.
pub fn read_weights<R: Read>(r: R) -> Result<ModelParams<f32>, EstimatorError> {
    let layers = read_layers(r)?;
    let expected = 2 * CONV_BLOCKS + 2;
    if layers.len() != expected {
        return Err(EstimatorError::Topology(format!("{} layers, expected {expected}", layers.len())));
    }
    let mut it = layers.into_iter();
    let mut blocks = Vec::new();
    let mut cin = INPUT_CHANNELS;
    for i in 0..CONV_BLOCKS {
        let (conv, bn) = match (it.next(), it.next()) {
            (Some(LayerParams::Conv2d(c)), Some(LayerParams::BatchNorm(b))) => (c, b),
            (a, b) => {
                return Err(EstimatorError::Topology(format!(
                    "block {i} is {}+{}, expected conv2d+batchnorm",
                    a.map_or("none", |l| l.kind_name()),
                    b.map_or("none", |l| l.kind_name())
                )))
            }
        };
        if conv.in_channels() != cin || bn.channels() != conv.out_channels() {
            return Err(EstimatorError::Topology(format!("block {i} channel counts do not chain")));
        }
        cin = conv.out_channels();
        blocks.push(ConvBlock { conv, bn });
    }
    let (fc1, fc2) = match (it.next(), it.next()) {
        (Some(LayerParams::Linear(a)), Some(LayerParams::Linear(b))) => (a, b),
        _ => return Err(EstimatorError::Topology("classifier must be two linear layers".into())),
    };
    if fc1.outputs() != fc2.inputs() {
        return Err(EstimatorError::Topology("fully connected layers do not chain".into()));
    }
    if blocks.windows(2).any(|w| w[0].conv.out_channels() != w[1].conv.out_channels()) {
        return Err(EstimatorError::Topology("conv blocks must share one filter count".into()));
    }
    let filters = cin;
    let rows = STRIP_HEIGHT / 8;
    let cells = fc1.inputs() / filters;
    if fc1.inputs() % filters != 0 || !cells.is_multiple_of(rows) || cells == 0 {
        return Err(EstimatorError::Topology(format!(
            "first linear layer takes {} inputs, not a {STRIP_HEIGHT}-pixel-high feature map of {filters} channels",
            fc1.inputs()
        )));
    }
    let config = ModelConfig {
        height: STRIP_HEIGHT,
        width: 8 * cells / rows,
        filters,
        hidden: fc1.outputs(),
        classes: fc2.outputs(),
    };
    config.validate()?;
    Ok(ModelParams { config, blocks, fc1, fc2 })
}

pub fn save_weights(params: &ModelParams<f32>, path: &Path) -> Result<(), EstimatorError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_weights(&mut w, params)?;
    w.flush().map_err(io_err(path))
}

pub fn load_weights(path: &Path) -> Result<ModelParams<f32>, EstimatorError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_weights(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::build_model;
    use crate::nn::{NnError, Tensor};

    #[test]
    fn round_trip_both_widths() {
        for config in [ModelConfig::double_eye(), ModelConfig::single_eye()] {
            let mut m = build_model(config, 11).unwrap();
            m.blocks[1].bn.running_mean = Tensor::filled(&[64], 0.25);
            let mut buf = Vec::new();
            write_weights(&mut buf, &m).unwrap();
            let back = read_weights(buf.as_slice()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = build_model(ModelConfig::single_eye(), 2).unwrap();
        save_weights(&m, &path).unwrap();
        assert_eq!(load_weights(&path).unwrap(), m);
        assert!(matches!(load_weights(&dir.path().join("nope")), Err(EstimatorError::Io { .. })));
    }

    #[test]
    fn rejects_wrong_layer_sequence() {
        let m = build_model(ModelConfig::single_eye(), 2).unwrap();
        let layers = vec![LayerParams::Linear(m.fc1.clone()), LayerParams::Linear(m.fc2.clone())];
        let mut buf = Vec::new();
        write_layers(&mut buf, &layers).unwrap();
        assert!(matches!(read_weights(buf.as_slice()), Err(EstimatorError::Topology(_))));
    }

    #[test]
    fn truncated_file_is_reported() {
        let m = build_model(ModelConfig::single_eye(), 2).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &m).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(matches!(read_weights(buf.as_slice()), Err(EstimatorError::Nn(NnError::Truncated(_)))));
    }
}
