//! Model files, compression reports and sensitivity histograms.
//!
//! Model file layout:
//!
//! ```text
//! serene-model 1
//! seed 42            (or "seed none")
//! input 784
//! layer 300 relu
//! layer 100 relu
//! layer 10 identity
//! blob 2166...
//! data
//! <f64 LE: per layer, weights row-major then biases>
//! <pin mask: one bit per parameter in the same order, LSB first, zero padded>
//! ```

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{evaluate, Activation, DenseLayer, Network};
use crate::optimizer::{Hyperparams, PinMask};
use crate::pruner::neuron_census;
use crate::sensitivity::{Estimator, SensitivityMap};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "serene-model";
const DATA_MARKER: &[u8] = b"data\n";

fn blob_len(params: usize) -> usize {
    8 * params + params.div_ceil(8)
}

/// Serializes `net` and `mask` into the model file format.
pub fn encode_model(net: &Network, mask: &PinMask) -> Result<Vec<u8>> {
    mask.check(net)?;
    let params = net.num_params();
    let mut out = Vec::with_capacity(128 + blob_len(params));
    let seed = net.seed().map_or_else(|| "none".to_string(), |s| s.to_string());
    let mut head = format!("{MAGIC} {FORMAT_VERSION}\nseed {seed}\ninput {}\n", net.input_dim());
    for layer in net.layers() {
        head.push_str(&format!("layer {} {}\n", layer.out_dim(), layer.activation));
    }
    head.push_str(&format!("blob {}\n", blob_len(params)));
    out.extend_from_slice(head.as_bytes());
    out.extend_from_slice(DATA_MARKER);
    for layer in net.layers() {
        for v in layer.weights.data().iter().chain(layer.bias.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let bits = mask.weights.iter().zip(&mask.biases).flat_map(|(w, b)| w.iter().chain(b)).copied();
    let mut byte = 0u8;
    let mut filled = 0;
    for bit in bits {
        byte |= u8::from(bit) << filled;
        filled += 1;
        if filled == 8 {
            out.push(byte);
            byte = 0;
            filled = 0;
        }
    }
    if filled > 0 {
        out.push(byte);
    }
    Ok(out)
}

struct Manifest {
    seed: Option<u64>,
    input: usize,
    layers: Vec<(usize, Activation)>,
    blob: usize,
}

fn parse_manifest(text: &str) -> Result<Manifest> {
    let bad = |m: String| Error::Manifest(m);
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| bad("empty manifest".into()))?;
    let version = first
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| bad(format!("not a model file: {first:?}")))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::Version {
            expected: FORMAT_VERSION,
            found: version.to_string(),
        });
    }
    let mut seed = None;
    let mut input = None;
    let mut layers = Vec::new();
    let mut blob = None;
    for line in lines {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let vals: Vec<&str> = parts.collect();
        let number = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad number in {line:?}")));
        match (key, vals.as_slice()) {
            ("seed", ["none"]) => seed = None,
            ("seed", [s]) => seed = Some(s.parse().map_err(|_| bad(format!("bad seed in {line:?}")))?),
            ("input", [d]) => input = Some(number(d)?),
            ("layer", [d, act]) => layers.push((number(d)?, act.parse::<Activation>().map_err(|e| bad(e.to_string()))?)),
            ("blob", [n]) => blob = Some(number(n)?),
            ("", []) => {}
            _ => return Err(bad(format!("unrecognised manifest line {line:?}"))),
        }
    }
    Ok(Manifest {
        seed,
        input: input.ok_or_else(|| bad("missing input dimension".into()))?,
        layers,
        blob: blob.ok_or_else(|| bad("missing blob size".into()))?,
    })
}

pub fn decode_model(bytes: &[u8]) -> Result<(Network, PinMask)> {
    let split = bytes
        .windows(DATA_MARKER.len() + 1)
        .position(|w| w[0] == b'\n' && &w[1..] == DATA_MARKER)
        .ok_or_else(|| Error::Manifest("missing data marker".into()))?;
    let text = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Manifest("manifest is not UTF-8".into()))?;
    let blob = &bytes[split + 1 + DATA_MARKER.len()..];
    let m = parse_manifest(text)?;
    if m.layers.is_empty() {
        return Err(Error::Manifest("no layers".into()));
    }

    let mut dims = vec![m.input];
    dims.extend(m.layers.iter().map(|(d, _)| *d));
    let params: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let expected = blob_len(params);
    if m.blob != expected {
        return Err(Error::Consistency(format!(
            "manifest layers need {expected} blob bytes, manifest declares {}",
            m.blob
        )));
    }
    if blob.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: blob.len(),
        });
    }
    if blob.len() > expected {
        return Err(Error::Consistency(format!(
            "blob holds {} bytes, manifest layers account for {expected}",
            blob.len()
        )));
    }

    let mut reals = blob[..8 * params]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut bit_index = 0usize;
    let bits = &blob[8 * params..];
    let mut next_bit = || {
        let b = bits[bit_index / 8] >> (bit_index % 8) & 1 == 1;
        bit_index += 1;
        b
    };
    let mut layers = Vec::with_capacity(m.layers.len());
    let mut mask = PinMask {
        weights: Vec::new(),
        biases: Vec::new(),
    };
    for (n, &(out, act)) in m.layers.iter().enumerate() {
        let inp = dims[n];
        let w: Vec<f64> = reals.by_ref().take(out * inp).collect();
        let b: Vec<f64> = reals.by_ref().take(out).collect();
        layers.push(DenseLayer::new(Tensor::from_vec(&[out, inp], w)?, Tensor::from_vec(&[out], b)?, act)?);
        mask.weights.push((0..out * inp).map(|_| next_bit()).collect());
        mask.biases.push((0..out).map(|_| next_bit()).collect());
    }
    let mut net = Network::new(m.input, layers)?;
    net.set_seed(m.seed);
    mask.check(&net)?;
    Ok((net, mask))
}

pub fn save_model(net: &Network, mask: &PinMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(net, mask)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Network, PinMask)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub params: usize,
    pub nonzero: usize,
    pub remaining_pct: f64,
    pub neurons: usize,
    pub surviving_neurons: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: Option<u64>,
    pub method: Option<String>,
    pub hyperparams: Option<Hyperparams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub architecture: String,
    pub layers: Vec<LayerReport>,
    pub total_params: usize,
    pub nonzero_params: usize,
    pub pinned_params: usize,
    pub compression_ratio: f64,
    pub validation_loss: Option<f64>,
    /// Top-1 error on the evaluation set, in `[0, 1]`.
    pub top1_error: Option<f64>,
    /// Top-1 error on a separate test set, when one was scored.
    pub test_error: Option<f64>,
    pub metadata: RunMetadata,
}

/// Compression and neuron statistics; exact zeros count as pruned.
pub fn prune_report(net: &Network, mask: &PinMask, v: Option<&Dataset>, metadata: RunMetadata) -> Result<PruneReport> {
    let census = neuron_census(net);
    let mut layers = Vec::with_capacity(net.layers().len());
    let (mut total, mut nonzero) = (0, 0);
    for (n, layer) in net.layers().iter().enumerate() {
        let params = layer.num_params();
        let nz = layer.weights.data().iter().chain(layer.bias.data()).filter(|x| **x != 0.0).count();
        total += params;
        nonzero += nz;
        layers.push(LayerReport {
            index: n,
            in_dim: layer.in_dim(),
            out_dim: layer.out_dim(),
            params,
            nonzero: nz,
            remaining_pct: 100.0 * nz as f64 / params as f64,
            neurons: census[n].0,
            surviving_neurons: census[n].1,
        });
    }
    let eval = v.map(|d| evaluate(net, d)).transpose()?;
    let dims: Vec<String> = net.dims().iter().map(usize::to_string).collect();
    let acts: Vec<String> = net.layers().iter().map(|l| l.activation.to_string()).collect();
    Ok(PruneReport {
        architecture: format!("{} [{}]", dims.join("-"), acts.join(",")),
        layers,
        total_params: total,
        nonzero_params: nonzero,
        pinned_params: mask.pinned_total(),
        compression_ratio: if nonzero == 0 { f64::INFINITY } else { total as f64 / nonzero as f64 },
        validation_loss: eval.map(|e| e.loss),
        top1_error: eval.map(|e| 1.0 - e.accuracy),
        test_error: None,
        metadata,
    })
}

impl PruneReport {
    /// Flat key/value JSON; an infinite ratio is written as `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Adds the top-1 error of `net` on `test`.
    pub fn with_test(mut self, net: &Network, test: &Dataset) -> Result<Self> {
        self.test_error = Some(1.0 - evaluate(net, test)?.accuracy);
        Ok(self)
    }

    pub fn surviving_neurons(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.neurons, l.surviving_neurons)).collect()
    }
}

impl fmt::Display for PruneReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "architecture  {}", self.architecture)?;
        writeln!(f, "{:<7}{:>12}{:>12}{:>11}{:>16}", "layer", "params", "nonzero", "remain%", "neurons")?;
        for l in &self.layers {
            writeln!(
                f,
                "{:<7}{:>12}{:>12}{:>10.2}%{:>16}",
                format!("fc{}", l.index + 1),
                l.params,
                l.nonzero,
                l.remaining_pct,
                format!("{}/{}", l.surviving_neurons, l.neurons)
            )?;
        }
        writeln!(f, "{:<7}{:>12}{:>12}{:>10.2}%", "total", self.total_params, self.nonzero_params, 100.0 * self.nonzero_params as f64 / self.total_params as f64)?;
        writeln!(f, "compression ratio  {:.2}x", self.compression_ratio)?;
        if let Some(e) = self.top1_error {
            writeln!(f, "top-1 error        {:.2}%", 100.0 * e)?;
        }
        if let Some(e) = self.test_error {
            writeln!(f, "test top-1 error   {:.2}%", 100.0 * e)?;
        }
        if let Some(l) = self.validation_loss {
            writeln!(f, "loss               {l:.5}")?;
        }
        Ok(())
    }
}

/// Lowest histogram edge; anything below it lands in the first bin.
pub const HISTOGRAM_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` log-spaced edges.
    pub edges: Vec<f64>,
    /// Counts per estimator in [`Estimator::ALL`] order; absent estimators are all-zero.
    pub counts: [Vec<u64>; 4],
    pub means: [Option<f64>; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramSummary {
    pub exact: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub local: Option<f64>,
    pub max: f64,
}

fn slot(e: Estimator) -> usize {
    Estimator::ALL.iter().position(|x| *x == e).expect("listed")
}

pub fn histogram(maps: &[SensitivityMap], bins: usize) -> Result<Histogram> {
    if maps.is_empty() {
        return Err(Error::Input("histogram needs at least one sensitivity map".into()));
    }
    if bins == 0 {
        return Err(Error::Input("histogram needs at least one bin".into()));
    }
    let shape: Vec<usize> = maps[0].values.iter().map(Vec::len).collect();
    let mut seen = [false; 4];
    for m in maps {
        if m.values.iter().map(Vec::len).collect::<Vec<_>>() != shape {
            return Err(Error::Consistency("sensitivity maps describe different networks".into()));
        }
        let s = slot(m.estimator);
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::Input(format!("estimator {} given twice", m.estimator)));
        }
    }
    let max = maps.iter().flat_map(|m| m.iter()).fold(0.0f64, f64::max);
    let hi = if max > HISTOGRAM_FLOOR { max } else { HISTOGRAM_FLOOR * 10.0 };
    let (llo, lhi) = (HISTOGRAM_FLOOR.log10(), hi.log10());
    let step = (lhi - llo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|k| 10f64.powf(llo + step * k as f64)).collect();
    edges[0] = HISTOGRAM_FLOOR;
    edges[bins] = hi;

    let mut counts: [Vec<u64>; 4] = std::array::from_fn(|_| vec![0; bins]);
    let mut means = [None; 4];
    for m in maps {
        let s = slot(m.estimator);
        for v in m.iter() {
            let k = if v <= HISTOGRAM_FLOOR {
                0
            } else {
                (((v.log10() - llo) / step).floor() as usize).min(bins - 1)
            };
            counts[s][k] += 1;
        }
        means[s] = Some(m.mean());
    }
    Ok(Histogram { edges, counts, means })
}

impl Histogram {
    pub fn summary(&self) -> HistogramSummary {
        HistogramSummary {
            exact: self.means[0],
            lower: self.means[1],
            upper: self.means[2],
            local: self.means[3],
            max: *self.edges.last().expect("edges"),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count_exact,count_lower,count_upper,count_local\n");
        for k in 0..self.edges.len() - 1 {
            s.push_str(&format!("{:e},{:e}", self.edges[k], self.edges[k + 1]));
            for c in &self.counts {
                s.push_str(&format!(",{}", c[k]));
            }
            s.push('\n');
        }
        s
    }
}

/// Writes the histogram CSV to `path` and returns the per-estimator means.
pub fn sensitivity_histogram(maps: &[SensitivityMap], bins: usize, path: impl AsRef<Path>) -> Result<HistogramSummary> {
    let path = path.as_ref();
    let h = histogram(maps, bins)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(h.to_csv().as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(h.summary())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pruner::threshold_prune;
    use crate::sensitivity::sensitivity;

    fn net() -> Network {
        Network::seeded(&[3, 4, 2], &[Activation::Sigmoid, Activation::Identity], 8).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let n = net();
        let (p, m) = threshold_prune(&n, 0.3, &PinMask::empty(&n));
        let bytes = encode_model(&p, &m).unwrap();
        let (back, mask) = decode_model(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(mask, m);
        assert_eq!(encode_model(&back, &mask).unwrap(), bytes);
    }

    #[test]
    fn truncated_blob() {
        let n = net();
        let mut bytes = encode_model(&n, &PinMask::empty(&n)).unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(decode_model(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn extra_layer_blob_is_inconsistent() {
        // manifest of a 2-layer net followed by the blob of a 3-layer net
        let two = Network::seeded(&[3, 4, 2], &[Activation::Relu, Activation::Identity], 1).unwrap();
        let three = Network::seeded(&[3, 4, 2, 2], &[Activation::Relu, Activation::Relu, Activation::Identity], 1).unwrap();
        let head = encode_model(&two, &PinMask::empty(&two)).unwrap();
        let tail = encode_model(&three, &PinMask::empty(&three)).unwrap();
        let marker = |b: &[u8]| b.windows(6).position(|w| w == b"\ndata\n").unwrap() + 6;
        let mut bytes = head[..marker(&head)].to_vec();
        bytes.extend_from_slice(&tail[marker(&tail)..]);
        assert!(matches!(decode_model(&bytes), Err(Error::Consistency(_))));
    }

    #[test]
    fn version_mismatch() {
        let n = net();
        let bytes = encode_model(&n, &PinMask::empty(&n)).unwrap();
        let mut s = bytes.clone();
        s[13] = b'7';
        assert!(matches!(decode_model(&s), Err(Error::Version { expected: 1, .. })));
    }

    #[test]
    fn dense_report() {
        let n = net();
        let r = prune_report(&n, &PinMask::empty(&n), None, RunMetadata::default()).unwrap();
        assert_eq!(r.compression_ratio, 1.0);
        assert!(r.layers.iter().all(|l| l.remaining_pct == 100.0));
        assert_eq!(r.total_params, 3 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn half_zero_report() {
        let mut n = net();
        let total = n.num_params();
        let mut left = total / 2;
        for layer in n.layers_mut() {
            for v in layer.weights.data_mut().iter_mut().chain(layer.bias.data_mut()) {
                if left > 0 {
                    *v = 0.0;
                    left -= 1;
                }
            }
        }
        let r = prune_report(&n, &PinMask::empty(&n), None, RunMetadata::default()).unwrap();
        assert_eq!(r.compression_ratio, 2.0);
        assert_eq!(r.surviving_neurons(), neuron_census(&n));
    }

    #[test]
    fn lenet_total() {
        let n = Network::seeded(&[784, 300, 100, 10], &[Activation::Relu, Activation::Relu, Activation::Identity], 0).unwrap();
        let r = prune_report(&n, &PinMask::empty(&n), None, RunMetadata::default()).unwrap();
        assert_eq!(r.total_params, 266_610);
        assert!(r.to_string().contains("266610"));
        assert!(r.to_json().contains("\"total_params\": 266610"));
    }

    fn constant_map(est: Estimator, v: f64) -> SensitivityMap {
        SensitivityMap {
            estimator: est,
            values: vec![vec![v; 3], vec![v]],
            batch_size: 1,
            outputs: 1,
        }
    }

    #[test]
    fn equal_values_share_one_bin() {
        let maps: Vec<_> = Estimator::ALL.iter().map(|e| constant_map(*e, 0.25)).collect();
        let h = histogram(&maps, 12).unwrap();
        for c in &h.counts {
            assert_eq!(c.iter().filter(|x| **x > 0).count(), 1);
            assert_eq!(c.iter().sum::<u64>(), 4);
        }
    }

    #[test]
    fn zeros_and_width_one_layers() {
        let h = histogram(&[constant_map(Estimator::Local, 0.0)], 5).unwrap();
        assert_eq!(h.counts[3][0], 4);
        assert!(h.edges.iter().all(|e| e.is_finite()));
        let csv = h.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("bin_lo,bin_hi,count_exact,count_lower,count_upper,count_local"));
    }

    #[test]
    fn means_follow_estimators() {
        let n = net();
        let x = Tensor::from_rows(&[vec![0.1, 0.5, 0.9], vec![0.7, 0.2, 0.3]]).unwrap();
        let maps: Vec<_> = Estimator::ALL.iter().map(|e| sensitivity(&n, &x, *e).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let s = sensitivity_histogram(&maps, 20, dir.path().join("h.csv")).unwrap();
        assert!(s.lower.unwrap() <= s.exact.unwrap() + 1e-12);
        assert!(s.exact.unwrap() <= s.upper.unwrap() + 1e-12);
    }

    #[test]
    fn mismatched_maps_rejected() {
        let mut b = constant_map(Estimator::Lower, 0.1);
        b.values.push(vec![0.1]);
        assert!(histogram(&[constant_map(Estimator::Exact, 0.1), b], 4).is_err());
    }
}
