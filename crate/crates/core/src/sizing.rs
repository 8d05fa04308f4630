//! Sizing systems from size-and-shape clustering.
//!
//! Banded mode splits the sample by a metadata key (e.g. height) into ranges,
//! then clusters each range separately with its own bandwidth. Pooled mode
//! clusters the whole sample once. Each size is summarised by the medians of
//! its members' numeric metadata.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{kernel_kmeans, KMeansOptions};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rkhs::{gram_matrix, lambda_heuristic, KernelConfig, LambdaHeuristic};

/// A half-open range `[lo, hi)` of the band key; the last band also includes `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("band {s:?} is not of the form lo-hi"));
        let (lo, hi) = s.trim().split_once('-').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Validation(format!("band {s:?} is empty")));
        }
        Ok(Band { lo, hi })
    }
}

/// Parses `"1190-1250,1250-1310,..."`.
pub fn parse_bands(s: &str) -> Result<Vec<Band>> {
    let bands = s
        .split(',')
        .filter(|b| !b.trim().is_empty())
        .map(Band::from_str)
        .collect::<Result<Vec<_>>>()?;
    if bands.is_empty() {
        return Err(Error::Validation("no bands given".into()));
    }
    Ok(bands)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    Auto(LambdaHeuristic),
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Auto(LambdaHeuristic::PooledRms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SizingMode {
    Banded {
        band_key: String,
        bands: Vec<Band>,
        k_per_band: usize,
    },
    Pooled {
        k: usize,
        /// Sizes are ordered by the median of this key, if given.
        sort_key: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizingOptions {
    pub mode: SizingMode,
    pub lambda: LambdaChoice,
    pub kmeans: KMeansOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Size {
    pub size_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
    pub group_size: usize,
    pub medians: BTreeMap<String, f64>,
    pub lambda: f64,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingReport {
    pub mode: String,
    /// Shapes that fell inside some band (all shapes in pooled mode).
    pub sample_size: usize,
    /// Shapes outside every band.
    pub excluded: Vec<String>,
    pub sizes: Vec<Size>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Medians of every metadata key present on at least one member.
fn metadata_medians(ds: &Dataset, members: &[usize]) -> BTreeMap<String, f64> {
    let keys: BTreeSet<&String> = members
        .iter()
        .flat_map(|&i| ds.shapes[i].meta().keys())
        .collect();
    keys.into_iter()
        .map(|key| {
            let mut vals: Vec<f64> = members
                .iter()
                .filter_map(|&i| ds.shapes[i].meta().get(key).copied())
                .collect();
            (key.clone(), median(&mut vals))
        })
        .collect()
}

fn meta_value(ds: &Dataset, i: usize, key: &str) -> Result<f64> {
    ds.shapes[i]
        .meta()
        .get(key)
        .copied()
        .ok_or_else(|| Error::MissingMetadataKey {
            shape: ds.ids[i].clone(),
            key: key.to_string(),
        })
}

/// Clusters `members` of `ds` into `k` groups, returned ordered by the
/// median of `sort_key` (then by cluster index), with the λ used.
fn cluster_group(
    ds: &Dataset,
    members: &[usize],
    k: usize,
    sort_key: Option<&str>,
    opts: &SizingOptions,
) -> Result<(Vec<Vec<usize>>, f64)> {
    let sub = ds.subset(members);
    let lambda = match opts.lambda {
        LambdaChoice::Fixed(l) => l,
        LambdaChoice::Auto(mode) => lambda_heuristic(&sub.shapes, mode)?,
    };
    let cfg = KernelConfig::new(lambda, ds.dim)?;
    let gram = gram_matrix(&sub.shapes, &cfg)?;
    let model = kernel_kmeans(&gram, k, &opts.kmeans)?;
    let mut groups: Vec<Vec<usize>> = model
        .cluster_members()
        .into_iter()
        .map(|g| g.into_iter().map(|local| members[local]).collect())
        .collect();
    if let Some(key) = sort_key {
        let mut keyed = groups
            .into_iter()
            .map(|g| {
                let mut vals = g.iter().map(|&i| meta_value(ds, i, key)).collect::<Result<Vec<_>>>()?;
                Ok((median(&mut vals), g))
            })
            .collect::<Result<Vec<_>>>()?;
        // stable: equal medians keep cluster order
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        groups = keyed.into_iter().map(|(_, g)| g).collect();
    }
    Ok((groups, lambda))
}

pub fn build_sizing(ds: &Dataset, opts: &SizingOptions) -> Result<SizingReport> {
    if ds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sizes = Vec::new();
    let mut excluded = Vec::new();
    let push = |groups: Vec<Vec<usize>>, band: Option<Band>, lambda: f64, sizes: &mut Vec<Size>| {
        for g in groups {
            sizes.push(Size {
                size_id: format!("T{}", sizes.len() + 1),
                band,
                group_size: g.len(),
                medians: metadata_medians(ds, &g),
                lambda,
                members: g.iter().map(|&i| ds.ids[i].clone()).collect(),
            });
        }
    };
    let mode = match &opts.mode {
        SizingMode::Banded {
            band_key,
            bands,
            k_per_band,
        } => {
            let mut members = vec![Vec::new(); bands.len()];
            for i in 0..ds.len() {
                let v = meta_value(ds, i, band_key)?;
                let last = bands.len() - 1;
                let slot = bands
                    .iter()
                    .enumerate()
                    .position(|(b, band)| v >= band.lo && (v < band.hi || (b == last && v == band.hi)));
                match slot {
                    Some(b) => members[b].push(i),
                    None => excluded.push(ds.ids[i].clone()),
                }
            }
            for (band, m) in bands.iter().zip(&members) {
                if m.len() < *k_per_band {
                    return Err(Error::EmptyBand {
                        band: band.to_string(),
                        members: m.len(),
                        k: *k_per_band,
                    });
                }
            }
            for (band, m) in bands.iter().zip(&members) {
                let (groups, lambda) = cluster_group(ds, m, *k_per_band, Some(band_key), opts)?;
                push(groups, Some(*band), lambda, &mut sizes);
            }
            "banded"
        }
        SizingMode::Pooled { k, sort_key } => {
            let all: Vec<usize> = (0..ds.len()).collect();
            let (groups, lambda) = cluster_group(ds, &all, *k, sort_key.as_deref(), opts)?;
            push(groups, None, lambda, &mut sizes);
            "pooled"
        }
    };
    Ok(SizingReport {
        mode: mode.to_string(),
        sample_size: ds.len() - excluded.len(),
        excluded,
        sizes,
    })
}

impl SizingReport {
    fn keys(&self) -> BTreeSet<&String> {
        self.sizes.iter().flat_map(|s| s.medians.keys()).collect()
    }

    /// One row per size: `size,band,<median per key>,group_size`.
    pub fn to_csv(&self) -> String {
        let keys = self.keys();
        let mut out = String::from("size,band");
        for k in &keys {
            let _ = write!(out, ",{k}");
        }
        out.push_str(",group_size\n");
        for s in &self.sizes {
            let band = s.band.map(|b| b.to_string()).unwrap_or_default();
            let _ = write!(out, "{},{band}", s.size_id);
            for k in &keys {
                match s.medians.get(*k) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            let _ = writeln!(out, ",{}", s.group_size);
        }
        out
    }

    /// Long format for box plots: `size,shape_id,key,value`.
    pub fn to_long_csv(&self, ds: &Dataset) -> String {
        let index: BTreeMap<&str, usize> = ds.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut out = String::from("size,shape_id,key,value\n");
        for s in &self.sizes {
            for id in &s.members {
                let shape = &ds.shapes[index[id.as_str()]];
                for (k, v) in shape.meta() {
                    let _ = writeln!(out, "{},{id},{k},{v}", s.size_id);
                }
            }
        }
        out
    }
}
