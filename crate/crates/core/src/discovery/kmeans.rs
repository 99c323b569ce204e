//! Lloyd's k-means with k-means++ seeding and restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DiscoveryError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once the summed squared centroid movement falls to this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 4,
            restarts: 10,
            max_iterations: 300,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub dim: usize,
    /// `k` rows of `dim` values.
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the nearest centroid.
    pub inertia: f64,
    pub restarts: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Index of the nearest centroid; ties go to the lower index.
    pub fn predict(&self, point: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (c, centroid) in self.centroids.iter().enumerate() {
            let d = dist2(point, centroid);
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }

    pub fn predict_all(&self, points: &[f64]) -> Vec<usize> {
        points.chunks(self.dim).map(|p| self.predict(p)).collect()
    }
}

fn distinct_points(points: &[f64], dim: usize) -> usize {
    let mut rows: Vec<Vec<u64>> = points
        .chunks(dim)
        .map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

/// Fits `k` centroids to `points`, a row-major `[n, dim]` array, keeping
/// the lowest-inertia run of `config.restarts`.
pub fn fit_kmeans(points: &[f64], dim: usize, config: &KMeansConfig) -> Result<ClusterModel, DiscoveryError> {
    let k = config.k;
    if k == 0 || dim == 0 || points.len() % dim != 0 {
        return Err(DiscoveryError::InvalidArgument(format!(
            "k-means needs k ≥ 1 and whole rows (k={k}, dim={dim}, values={})",
            points.len()
        )));
    }
    let distinct = distinct_points(points, dim);
    if distinct < k {
        return Err(DiscoveryError::DegenerateData { distinct, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<ClusterModel> = None;
    for _ in 0..config.restarts.max(1) {
        let run = lloyd(points, dim, config, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.restarts = config.restarts.max(1);
    Ok(best)
}

fn plus_plus_init(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = vec![row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(row(next).to_vec());
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(row(i), centroids.last().unwrap()));
        }
    }
    centroids
}

fn lloyd(points: &[f64], dim: usize, config: &KMeansConfig, rng: &mut ChaCha8Rng) -> ClusterModel {
    let n = points.len() / dim;
    let k = config.k;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut model = ClusterModel {
        dim,
        centroids: plus_plus_init(points, dim, k, rng),
        inertia: f64::INFINITY,
        restarts: 1,
    };
    let mut labels = vec![0; n];
    for _ in 0..config.max_iterations {
        for (i, l) in labels.iter_mut().enumerate() {
            *l = model.predict(row(i));
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        // An emptied cluster takes over the point farthest from its centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = dist2(row(a), &model.centroids[labels[a]]);
                        let db = dist2(row(b), &model.centroids[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("nonempty data");
                let old = labels[far];
                counts[old] -= 1;
                for (s, v) in sums[old].iter_mut().zip(row(far)) {
                    *s -= v;
                }
                labels[far] = c;
                counts[c] = 1;
                sums[c] = row(far).to_vec();
            }
        }
        let mut shift = 0.0;
        for c in 0..k {
            let updated: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift += dist2(&updated, &model.centroids[c]);
            model.centroids[c] = updated;
        }
        if shift <= config.tolerance {
            break;
        }
    }
    model.inertia = (0..n)
        .map(|i| dist2(row(i), &model.centroids[model.predict(row(i))]))
        .sum();
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn separated_clouds_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
        let mut points = Vec::new();
        let mut means = [[0.0; 2]; 4];
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..50 {
                let p = [center[0] + noise.sample(&mut rng), center[1] + noise.sample(&mut rng)];
                means[c][0] += p[0] / 50.0;
                means[c][1] += p[1] / 50.0;
                points.extend(p);
            }
        }
        let model = fit_kmeans(&points, 2, &KMeansConfig::default()).unwrap();
        for mean in means {
            let c = model.predict(&mean);
            assert!(dist2(&model.centroids[c], &mean).sqrt() < 1e-6);
        }
    }

    #[test]
    fn one_cluster_is_the_mean() {
        let points = [1.0, 2.0, 3.0, 6.0, -1.0, 1.0];
        let model = fit_kmeans(&points, 2, &KMeansConfig { k: 1, ..KMeansConfig::default() }).unwrap();
        assert!((model.centroids[0][0] - 1.0).abs() < 1e-12);
        assert!((model.centroids[0][1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn restarts_never_lose_to_a_single_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let points: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let config = KMeansConfig { seed: 5, ..KMeansConfig::default() };
        let many = fit_kmeans(&points, 2, &config).unwrap();
        let one = fit_kmeans(&points, 2, &KMeansConfig { restarts: 1, ..config }).unwrap();
        assert!(many.inertia <= one.inertia);
        assert_eq!(many, fit_kmeans(&points, 2, &config).unwrap());
    }

    #[test]
    fn too_few_distinct_points_is_degenerate() {
        let points = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0];
        assert!(matches!(
            fit_kmeans(&points, 2, &KMeansConfig::default()),
            Err(DiscoveryError::DegenerateData { distinct: 2, k: 4 })
        ));
    }
}
