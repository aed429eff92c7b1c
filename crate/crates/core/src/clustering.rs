//! Two-cluster K-means over the feature cloud and the choice of which
//! cluster is the lesion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeaturePoint;
use crate::raster::{BinaryMask, ScalarMap};

/// Partial sums are formed over fixed-size chunks and combined in chunk
/// order, so results do not depend on the thread count.
const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves more than `tol` times the data diameter.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 5,
            max_iter: 100,
            tol: 1e-4,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if !self.tol.is_finite() || self.tol < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tol must be finite and >= 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster id (0 or 1) of every point.
    pub labels: Vec<u8>,
    pub centroids: [FeaturePoint; 2],
    /// Sum of squared distances from each point to its labeled centroid.
    pub sse: f64,
    /// Lloyd iterations of the winning restart, summed over refinement rounds.
    pub iterations: usize,
}

#[inline]
fn nearest(p: &FeaturePoint, c: &[FeaturePoint; 2]) -> (u8, f64) {
    let d0 = p.dist2(&c[0]);
    let d1 = p.dist2(&c[1]);
    if d0 <= d1 {
        (0, d0)
    } else {
        (1, d1)
    }
}

/// Labels every point with its nearest centroid and returns the SSE.
fn assign(points: &[FeaturePoint], centroids: &[FeaturePoint; 2], labels: &mut [u8]) -> f64 {
    let partial: Vec<f64> = points
        .par_chunks(CHUNK)
        .zip(labels.par_chunks_mut(CHUNK))
        .map(|(pts, labs)| {
            let mut sse = 0.0;
            for (p, l) in pts.iter().zip(labs.iter_mut()) {
                let (id, d) = nearest(p, centroids);
                *l = id;
                sse += d;
            }
            sse
        })
        .collect();
    partial.iter().sum()
}

#[derive(Default, Clone, Copy)]
struct Sums {
    a: [f64; 2],
    b: [f64; 2],
    n: [usize; 2],
}

fn cluster_sums(points: &[FeaturePoint], labels: &[u8]) -> Sums {
    let partial: Vec<Sums> = points
        .par_chunks(CHUNK)
        .zip(labels.par_chunks(CHUNK))
        .map(|(pts, labs)| {
            let mut s = Sums::default();
            for (p, &l) in pts.iter().zip(labs) {
                let k = l as usize;
                s.a[k] += p.a;
                s.b[k] += p.b;
                s.n[k] += 1;
            }
            s
        })
        .collect();
    partial.iter().fold(Sums::default(), |mut acc, s| {
        for k in 0..2 {
            acc.a[k] += s.a[k];
            acc.b[k] += s.b[k];
            acc.n[k] += s.n[k];
        }
        acc
    })
}

fn farthest_from(points: &[FeaturePoint], c: &FeaturePoint) -> FeaturePoint {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = p.dist2(c);
        if d > best.1 {
            best = (i, d);
        }
    }
    points[best.0]
}

fn plus_plus(points: &[FeaturePoint], rng: &mut ChaCha8Rng) -> [FeaturePoint; 2] {
    let first = points[rng.random_range(0..points.len())];
    let weights: Vec<f64> = points.iter().map(|p| p.dist2(&first)).collect();
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut cum = 0.0;
    let mut pick = None;
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        if w > 0.0 {
            pick = Some(i);
            if cum > target {
                break;
            }
        }
    }
    // At least one point differs from `first`, so `pick` is set.
    [first, points[pick.expect("a distinct point exists")]]
}

fn bbox_diameter(points: &[FeaturePoint]) -> f64 {
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo.a = lo.a.min(p.a);
        lo.b = lo.b.min(p.b);
        hi.a = hi.a.max(p.a);
        hi.b = hi.b.max(p.b);
    }
    lo.dist2(&hi).sqrt()
}

fn lloyd(
    points: &[FeaturePoint],
    mut centroids: [FeaturePoint; 2],
    cfg: &KMeansConfig,
    diameter: f64,
) -> ClusterResult {
    let mut labels = vec![0u8; points.len()];
    let mut prev_sse = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let sse = assign(points, &centroids, &mut labels);
        debug_assert!(
            sse <= prev_sse * (1.0 + 1e-9) + 1e-9,
            "sse increased from {prev_sse} to {sse}"
        );
        prev_sse = sse;
        iterations += 1;

        let sums = cluster_sums(points, &labels);
        let mut next = centroids;
        for (k, c) in next.iter_mut().enumerate() {
            if sums.n[k] > 0 {
                let n = sums.n[k] as f64;
                *c = FeaturePoint::new(sums.a[k] / n, sums.b[k] / n);
            }
        }
        for k in 0..2 {
            if sums.n[k] == 0 {
                next[k] = farthest_from(points, &next[1 - k]);
            }
        }
        let moved = next[0]
            .dist2(&centroids[0])
            .max(next[1].dist2(&centroids[1]))
            .sqrt();
        centroids = next;
        if moved <= cfg.tol * diameter || iterations >= cfg.max_iter {
            break;
        }
    }
    let sse = assign(points, &centroids, &mut labels);
    ClusterResult {
        labels,
        centroids,
        sse,
        iterations,
    }
}

/// One sequential pass of Hartigan single-point moves over a Lloyd partition.
/// Returns the improved centroids if any point moved.
fn hartigan_pass(points: &[FeaturePoint], run: &ClusterResult) -> Option<[FeaturePoint; 2]> {
    let sums = cluster_sums(points, &run.labels);
    let mut n = sums.n.map(|v| v as f64);
    let mut sa = sums.a;
    let mut sb = sums.b;
    let mut moved = false;
    for (p, &l) in points.iter().zip(&run.labels) {
        let (k, o) = (l as usize, 1 - l as usize);
        if n[k] <= 1.0 {
            continue;
        }
        let ck = FeaturePoint::new(sa[k] / n[k], sb[k] / n[k]);
        let co = FeaturePoint::new(sa[o] / n[o], sb[o] / n[o]);
        let leave = p.dist2(&ck) * n[k] / (n[k] - 1.0);
        let join = p.dist2(&co) * n[o] / (n[o] + 1.0);
        if join < leave * (1.0 - 1e-12) {
            sa[k] -= p.a;
            sb[k] -= p.b;
            n[k] -= 1.0;
            sa[o] += p.a;
            sb[o] += p.b;
            n[o] += 1.0;
            moved = true;
        }
    }
    moved.then(|| [0, 1].map(|k| FeaturePoint::new(sa[k] / n[k], sb[k] / n[k])))
}

/// Lloyd from `init`, then alternating Hartigan passes and Lloyd until
/// neither changes the partition.
fn refine(points: &[FeaturePoint], init: [FeaturePoint; 2], cfg: &KMeansConfig, diameter: f64) -> ClusterResult {
    let mut run = lloyd(points, init, cfg, diameter);
    for _ in 0..cfg.max_iter {
        let Some(centroids) = hartigan_pass(points, &run) else {
            break;
        };
        let next = lloyd(points, centroids, cfg, diameter);
        if next.sse >= run.sse {
            break;
        }
        run = ClusterResult {
            iterations: run.iterations + next.iterations,
            ..next
        };
    }
    run
}

/// Best-of-restarts K-means with K = 2: seeded k-means++ initialization,
/// Lloyd iterations, then Hartigan single-point refinement. Output is
/// identical for identical inputs and config.
pub fn kmeans2(points: &[FeaturePoint], cfg: &KMeansConfig) -> Result<ClusterResult> {
    cfg.validate()?;
    let first = match points.first() {
        Some(p) => *p,
        None => return Err(Error::DegenerateData),
    };
    if points.iter().all(|p| *p == first) {
        return Err(Error::DegenerateData);
    }
    if let Some(p) = points.iter().find(|p| !p.a.is_finite() || !p.b.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite feature point {p:?}")));
    }
    let diameter = bbox_diameter(points);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<ClusterResult> = None;
    for _ in 0..cfg.restarts {
        let init = plus_plus(points, &mut rng);
        let run = refine(points, init, cfg, diameter);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn cluster_means(labels: &[u8], values: &[f64]) -> [f64; 2] {
    let mut sum = [0.0; 2];
    let mut n = [0usize; 2];
    for (&l, &v) in labels.iter().zip(values) {
        sum[l as usize] += v;
        n[l as usize] += 1;
    }
    [0, 1].map(|k| if n[k] > 0 { sum[k] / n[k] as f64 } else { f64::NAN })
}

/// Marks the darker cluster as lesion. When both clusters have the same mean
/// luminance (within 1e-9) the one with the higher mean smoothed flatness
/// wins.
pub fn lesion_cluster_select(result: &ClusterResult, y: &ScalarMap, l_smooth: &ScalarMap) -> Result<BinaryMask> {
    if result.labels.len() != y.data().len() || !y.same_dims(l_smooth) {
        return Err(Error::Size(format!(
            "{} labels for a {}x{} image",
            result.labels.len(),
            y.width(),
            y.height()
        )));
    }
    let my = cluster_means(&result.labels, y.data());
    let lesion = match (my[0].is_nan(), my[1].is_nan()) {
        (true, _) => 1,
        (_, true) => 0,
        _ if (my[0] - my[1]).abs() <= 1e-9 => {
            let ml = cluster_means(&result.labels, l_smooth.data());
            if ml[1] > ml[0] {
                1
            } else {
                0
            }
        }
        _ if my[1] < my[0] => 1,
        _ => 0,
    };
    BinaryMask::new(
        y.width(),
        y.height(),
        result.labels.iter().map(|&l| l == lesion).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    fn pts(v: &[(f64, f64)]) -> Vec<FeaturePoint> {
        v.iter().map(|&(a, b)| FeaturePoint::new(a, b)).collect()
    }

    #[test]
    fn four_point_square() {
        let p = pts(&[(0.0, 0.0), (0.0, 1.0), (10.0, 0.0), (10.0, 1.0)]);
        let r = kmeans2(&p, &KMeansConfig::default()).unwrap();
        let mut c = r.centroids.to_vec();
        c.sort_by(|x, y| x.a.total_cmp(&y.a));
        assert_eq!(c, pts(&[(0.0, 0.5), (10.0, 0.5)]));
        assert_abs_diff_eq!(r.sse, 1.0, epsilon = 1e-12);
        assert_eq!(r.labels[0], r.labels[1]);
        assert_ne!(r.labels[0], r.labels[2]);
    }

    #[test]
    fn hartigan_escapes_lloyd_fixed_point() {
        let p = pts(&[
            (0.4995, 0.5370),
            (7.6974, 5.2503),
            (5.4307, 3.0975),
            (3.3038, 6.1086),
            (3.9506, 1.0241),
            (9.1728, 3.5506),
            (5.2034, 2.2994),
            (5.1315, 6.0939),
            (5.1741, 2.7466),
            (1.3550, 0.9063),
            (7.2452, 0.0784),
        ]);
        // Lloyd is stable at {0, 9} vs the rest; moving point 4 is better.
        let lone = |ids: &[usize]| {
            let c = |sel: bool| {
                let m: Vec<_> = p.iter().enumerate().filter(|(i, _)| ids.contains(i) == sel).map(|(_, q)| *q).collect();
                let n = m.len() as f64;
                FeaturePoint::new(m.iter().map(|q| q.a).sum::<f64>() / n, m.iter().map(|q| q.b).sum::<f64>() / n)
            };
            [c(true), c(false)]
        };
        let cfg = KMeansConfig::default();
        let diameter = bbox_diameter(&p);
        let stuck = lloyd(&p, lone(&[0, 9]), &cfg, diameter);
        let refined = refine(&p, lone(&[0, 9]), &cfg, diameter);
        assert!(refined.sse < stuck.sse * 0.95, "{} vs {}", refined.sse, stuck.sse);
        assert_eq!(refined.labels[4], refined.labels[0]);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let p = pts(&[(3.0, 4.0); 5]);
        assert!(matches!(kmeans2(&p, &KMeansConfig::default()), Err(Error::DegenerateData)));
        assert!(matches!(kmeans2(&[], &KMeansConfig::default()), Err(Error::DegenerateData)));
    }

    #[test]
    fn invalid_config() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        let bad = KMeansConfig {
            restarts: 0,
            ..Default::default()
        };
        assert!(matches!(kmeans2(&p, &bad), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut p = Vec::new();
        let mut truth = Vec::new();
        for i in 0..2000 {
            let blob = i % 2;
            let cx = if blob == 0 { -10.0 } else { 10.0 };
            p.push(FeaturePoint::new(cx + noise.sample(&mut rng), 5.0 + noise.sample(&mut rng)));
            truth.push(blob as u8);
        }
        let r = kmeans2(&p, &KMeansConfig::default()).unwrap();
        let agree = r.labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let agree = agree.max(p.len() - agree);
        assert!(agree as f64 >= 0.99 * p.len() as f64);
    }

    #[test]
    fn labels_and_sse_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p: Vec<_> = (0..500)
            .map(|_| FeaturePoint::new(rng.random_range(-5.0..5.0), rng.random_range(-1.0..9.0)))
            .collect();
        let r = kmeans2(&p, &KMeansConfig::default()).unwrap();
        let mut sse = 0.0;
        for (q, &l) in p.iter().zip(&r.labels) {
            let (id, d) = nearest(q, &r.centroids);
            assert_eq!(id, l);
            sse += d;
        }
        assert_abs_diff_eq!(sse, r.sse, epsilon = 1e-9 * sse);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p: Vec<_> = (0..50_000)
            .map(|_| FeaturePoint::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
            .collect();
        let cfg = KMeansConfig::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| kmeans2(&p, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert_eq!(a.sse.to_bits(), b.sse.to_bits());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Second centroid starts far from every point, so it owns nothing.
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (9.0, 0.0), (10.0, 0.0)]);
        let cfg = KMeansConfig::default();
        let r = lloyd(&p, [FeaturePoint::new(5.0, 0.0), FeaturePoint::new(500.0, 0.0)], &cfg, 10.0);
        assert!(r.labels.contains(&0) && r.labels.contains(&1));
        assert_abs_diff_eq!(r.sse, 1.0, epsilon = 1e-12);
    }

    fn scene() -> (ScalarMap, ScalarMap) {
        let y = ScalarMap::new(4, 1, vec![50.0, 70.0, 170.0, 190.0]).unwrap();
        let l = ScalarMap::new(4, 1, vec![200.0, 180.0, 10.0, 0.0]).unwrap();
        (y, l)
    }

    fn result(labels: Vec<u8>) -> ClusterResult {
        ClusterResult {
            labels,
            centroids: [FeaturePoint::default(); 2],
            sse: 0.0,
            iterations: 1,
        }
    }

    #[test]
    fn darker_cluster_is_lesion() {
        let (y, l) = scene();
        let m = lesion_cluster_select(&result(vec![0, 0, 1, 1]), &y, &l).unwrap();
        assert_eq!(m.bits(), &[true, true, false, false]);
        // Swapping ids does not change the mask.
        let m2 = lesion_cluster_select(&result(vec![1, 1, 0, 0]), &y, &l).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn luminance_tie_uses_flatness() {
        let y = ScalarMap::new(4, 1, vec![100.0, 100.0, 100.0, 100.0]).unwrap();
        let l = ScalarMap::new(4, 1, vec![10.0, 20.0, 200.0, 210.0]).unwrap();
        let m = lesion_cluster_select(&result(vec![0, 0, 1, 1]), &y, &l).unwrap();
        assert_eq!(m.bits(), &[false, false, true, true]);
        let m2 = lesion_cluster_select(&result(vec![1, 1, 0, 0]), &y, &l).unwrap();
        assert_eq!(m, m2);
    }
}
