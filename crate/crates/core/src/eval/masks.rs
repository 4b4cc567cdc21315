use std::fmt::Write as _;

use crate::data::EncodedInstance;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numeric::Rng;

pub const HISTOGRAM_BINS: usize = 101;

/// Uniform bins over `[min, max]`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_values(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let mut counts = vec![0u64; bins];
        if values.is_empty() {
            return Histogram {
                min: 0.0,
                max: 0.0,
                counts,
            };
        }
        let width = (max - min) / bins as f64;
        for &v in values {
            let b = if width > 0.0 {
                (((v - min) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[b] += 1;
        }
        Histogram { min, max, counts }
    }

    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / self.counts.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `lower,upper,count` rows under a `#` header carrying the bin spec.
    pub fn to_delimited(&self, label: &str) -> String {
        let w = self.bin_width();
        let mut s = format!(
            "# {label} bins={} min={} max={} width={} total={}\nlower,upper,count\n",
            self.counts.len(),
            self.min,
            self.max,
            w,
            self.total()
        );
        for (i, c) in self.counts.iter().enumerate() {
            let lo = self.min + w * i as f64;
            let hi = if i + 1 == self.counts.len() {
                self.max
            } else {
                self.min + w * (i + 1) as f64
            };
            let _ = writeln!(s, "{lo},{hi},{c}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct BlockMaskStats {
    pub block: usize,
    pub histogram: Histogram,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct MaskExample {
    /// Row in the inspected instance slice.
    pub index: usize,
    /// One mask vector per block (blocks without a mask are empty).
    pub masks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MaskInspection {
    pub blocks: Vec<BlockMaskStats>,
    pub examples: Vec<MaskExample>,
    pub sampled: usize,
}

impl MaskInspection {
    /// One column per mask coordinate, one row per (example, block).
    pub fn examples_delimited(&self) -> String {
        let mut s = String::from("instance,block,values\n");
        for ex in &self.examples {
            for (b, m) in ex.masks.iter().enumerate() {
                let vals: Vec<String> = m.iter().map(f64::to_string).collect();
                let _ = writeln!(s, "{},{},{}", ex.index, b, vals.join(" "));
            }
        }
        s
    }
}

/// Mask vectors of every block for each instance.
pub fn instance_masks(model: &Model, instances: &[&EncodedInstance]) -> Result<Vec<Vec<Vec<f64>>>> {
    let cache = model.forward(instances)?;
    let masks = cache.masks();
    Ok((0..instances.len())
        .map(|r| {
            masks
                .iter()
                .map(|m| m.map_or_else(Vec::new, |mm| mm.row(r).to_vec()))
                .collect()
        })
        .collect())
}

/// Largest absolute coordinate difference over all blocks' masks.
pub fn mask_linf(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

const CHUNK: usize = 4096;

/// Histograms of mask values per block over a uniform sample of
/// `sample_size` instances, plus the raw masks of the first `examples`
/// sampled ones.
pub fn inspect_masks(
    model: &Model,
    instances: &[EncodedInstance],
    sample_size: usize,
    examples: usize,
    seed: u64,
) -> Result<MaskInspection> {
    if sample_size < 1 {
        return Err(Error::Config("mask inspection needs a sample size of at least 1".into()));
    }
    if model.network.blocks().iter().all(|b| b.mask.is_none()) {
        return Err(Error::Config(format!(
            "{} model has no instance-guided masks to inspect",
            model.spec().topology
        )));
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    Rng::derived(seed, 0x3A5C).shuffle(&mut order);
    order.truncate(sample_size.min(instances.len()));

    let n_blocks = model.network.blocks().len();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n_blocks];
    let mut example_out = Vec::new();
    for chunk in order.chunks(CHUNK) {
        let batch: Vec<&EncodedInstance> = chunk.iter().map(|&i| &instances[i]).collect();
        let cache = model.forward(&batch)?;
        for (b, m) in cache.masks().into_iter().enumerate() {
            if let Some(m) = m {
                values[b].extend_from_slice(m.as_slice());
            }
        }
        for (r, &idx) in chunk.iter().enumerate() {
            if example_out.len() >= examples {
                break;
            }
            example_out.push(MaskExample {
                index: idx,
                masks: cache
                    .masks()
                    .iter()
                    .map(|m| m.map_or_else(Vec::new, |mm| mm.row(r).to_vec()))
                    .collect(),
            });
        }
    }
    let blocks = values
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(b, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            BlockMaskStats {
                block: b,
                histogram: Histogram::from_values(v, HISTOGRAM_BINS),
                mean,
                std,
            }
        })
        .collect();
    Ok(MaskInspection {
        blocks,
        examples: example_out,
        sampled: order.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::{tiny_instances, tiny_schema, tiny_spec};
    use crate::model::Topology;

    #[test]
    fn histogram_bins() {
        let h = Histogram::from_values(&[0.0, 0.5, 1.0, 1.0], 2);
        assert_eq!(h.counts, vec![1, 3]);
        let h = Histogram::from_values(&[2.0; 5], HISTOGRAM_BINS);
        assert_eq!(h.total(), 5);
        assert_eq!(h.counts[0], 5);
        let text = Histogram::from_values(&[0.0, 1.0], HISTOGRAM_BINS).to_delimited("block0");
        assert!(text.starts_with("# block0 bins=101 min=0 max=1"));
        assert_eq!(text.lines().count(), 2 + HISTOGRAM_BINS);
    }

    #[test]
    fn untrained_zero_bias_masks_are_concentrated() {
        let m = Model::new(&tiny_spec(Topology::Serial), tiny_schema()).unwrap();
        let insts = tiny_instances(&mut Rng::new(1), 500);
        let r = inspect_masks(&m, &insts, 200, 2, 0).unwrap();
        assert_eq!(r.sampled, 200);
        assert_eq!(r.blocks.len(), 3);
        for (b, block) in r.blocks.iter().zip(m.network.blocks()) {
            assert_eq!(b.histogram.total(), 200 * block.input_dim() as u64);
            assert!(b.mean.abs() < 0.25, "{}", b.mean);
        }
        // identity-start bias moves the whole distribution to ~1
        let spec = crate::model::ModelSpec {
            mask_bias_init: 1.0,
            ..tiny_spec(Topology::Serial)
        };
        let shifted = Model::new(&spec, tiny_schema()).unwrap();
        let r1 = inspect_masks(&shifted, &insts, 200, 0, 0).unwrap();
        for (a, b) in r.blocks.iter().zip(&r1.blocks) {
            assert!((b.mean - a.mean - 1.0).abs() < 1e-9);
        }
        assert_eq!(r.examples.len(), 2);
    }

    #[test]
    fn identical_instances_identical_masks() {
        let m = Model::new(&tiny_spec(Topology::Serial), tiny_schema()).unwrap();
        let insts = tiny_instances(&mut Rng::new(2), 2);
        let copy = insts[0].clone();
        let masks = instance_masks(&m, &[&insts[0], &copy, &insts[1]]).unwrap();
        assert_eq!(mask_linf(&masks[0], &masks[1]), 0.0);
        assert!(mask_linf(&masks[0], &masks[2]) > 0.0);
    }

    #[test]
    fn baselines_have_nothing_to_inspect() {
        let m = Model::new(&tiny_spec(Topology::Dnn), tiny_schema()).unwrap();
        let insts = tiny_instances(&mut Rng::new(2), 5);
        assert!(inspect_masks(&m, &insts, 5, 1, 0).is_err());
    }
}
