use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CodeSequence, QuantizerError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    /// `C` rows of dimension `d`.
    pub centroids: Vec<Vec<f64>>,
    pub feature_kind: String,
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: KMeansModel,
    /// Sum of squared distances after each assignment step.
    pub objectives: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; the lowest index wins ties.
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(x, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

impl KMeansModel {
    pub fn n_classes(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = format!(
            "kmeans C={} d={} feature_kind={}\n",
            self.n_classes(),
            self.dim(),
            self.feature_kind
        );
        for row in &self.centroids {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", vals.join(" "));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(crate::with_path(path.as_ref()))?;
        let mut lines = text.lines();
        let err = |line: usize, detail: String| QuantizerError::Parse {
            file: "kmeans model",
            line,
            detail,
        };
        let header = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("kmeans") {
            return Err(err(1, format!("bad header {header:?}")));
        }
        let (mut c, mut d, mut kind) = (None, None, None);
        for f in fields {
            match f.split_once('=') {
                Some(("C", v)) => c = v.parse::<usize>().ok(),
                Some(("d", v)) => d = v.parse::<usize>().ok(),
                Some(("feature_kind", v)) => kind = Some(v.to_string()),
                _ => return Err(err(1, format!("unknown header field {f:?}"))),
            }
        }
        let (c, d, kind) = match (c, d, kind) {
            (Some(c), Some(d), Some(k)) => (c, d, k),
            _ => return Err(err(1, "header needs C, d and feature_kind".into())),
        };
        let mut centroids = Vec::with_capacity(c);
        for i in 0..c {
            let line = lines
                .next()
                .ok_or_else(|| err(i + 2, "missing centroid row".into()))?;
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| err(i + 2, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != d {
                return Err(err(i + 2, format!("expected {d} values, got {}", row.len())));
            }
            centroids.push(row);
        }
        Ok(Self {
            centroids,
            feature_kind: kind,
        })
    }
}

fn kmeans_pp(features: &[Vec<f64>], c: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![features[rng.gen_range(0..features.len())].clone()];
    let mut d2: Vec<f64> = features.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut idx = features.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.gen_range(0..features.len())
        };
        let mu = features[pick].clone();
        for (dv, x) in d2.iter_mut().zip(features) {
            *dv = dv.min(sq_dist(x, &mu));
        }
        centroids.push(mu);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. Stops when the relative drop of
/// the objective falls below `tol`, assignments stop changing, or after
/// `max_iters` iterations. Clusters that lose all points are re-seeded with
/// the point farthest from its centroid.
pub fn kmeans_fit(
    features: &[Vec<f64>],
    c: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
    feature_kind: &str,
) -> Result<KMeansFit> {
    if c < 2 {
        return Err(QuantizerError::Argument(format!("need at least 2 classes, got {c}")));
    }
    if features.len() < c {
        return Err(QuantizerError::Argument(format!(
            "{} frames is fewer than {c} classes",
            features.len()
        )));
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(QuantizerError::Dimension {
            expected: d,
            got: bad.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(features, c, &mut rng);
    let mut assign = vec![usize::MAX; features.len()];
    let mut objectives = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut obj = 0.0;
        let mut dists = Vec::with_capacity(features.len());
        for (i, x) in features.iter().enumerate() {
            let (k, dist) = nearest(x, &centroids);
            changed |= assign[i] != k;
            assign[i] = k;
            obj += dist;
            dists.push(dist);
        }
        let converged = objectives
            .last()
            .is_some_and(|&prev: &f64| prev - obj <= tol * prev.abs());
        objectives.push(obj);
        if !changed || converged {
            break;
        }
        let mut sums = vec![vec![0.0; d]; c];
        let mut counts = vec![0usize; c];
        for (x, &k) in features.iter().zip(&assign) {
            counts[k] += 1;
            sums[k].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        let mut taken = vec![false; features.len()];
        for k in 0..c {
            if counts[k] > 0 {
                centroids[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            } else {
                let far = (0..features.len())
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("at least c frames");
                taken[far] = true;
                centroids[k] = features[far].clone();
            }
        }
    }
    Ok(KMeansFit {
        model: KMeansModel {
            centroids,
            feature_kind: feature_kind.to_string(),
        },
        objectives,
    })
}

/// Nearest-centroid labels for each frame.
pub fn kmeans_assign(model: &KMeansModel, features: &[Vec<f64>]) -> Result<CodeSequence> {
    let d = model.dim();
    let mut codes = Vec::with_capacity(features.len());
    for f in features {
        if f.len() != d {
            return Err(QuantizerError::Dimension {
                expected: d,
                got: f.len(),
            });
        }
        codes.push(nearest(f, &model.centroids).0);
    }
    Ok(CodeSequence::frames(codes))
}
