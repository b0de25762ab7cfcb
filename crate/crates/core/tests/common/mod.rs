//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use wavesp::autodiff::Tensor;
use wavesp::rng;
use wavesp::ssm::SsmParams;

pub fn random(shape: &[usize], seed: u64, name: &str, scale: f64) -> Tensor<f64> {
    let mut r = rng::stream(seed, name);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| scale * r.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Explicit per-step recurrence over row-major `steps × d` input.
pub fn naive_scan(u: &[f64], steps: usize, d: usize, p: &SsmParams<f64>) -> Vec<f64> {
    let n = p.a_log.shape()[1];
    let (wd, bd, wb, wc, al, sk) =
        (p.w_delta.to_vec(), p.b_delta.to_vec(), p.w_b.to_vec(), p.w_c.to_vec(), p.a_log.to_vec(), p.skip.to_vec());
    let mut h = vec![0.0; d * n];
    let mut y = vec![0.0; steps * d];
    for t in 0..steps {
        let ut = &u[t * d..(t + 1) * d];
        let dot = |w: &[f64], cols: usize, j: usize| (0..d).map(|i| ut[i] * w[i * cols + j]).sum::<f64>();
        let b: Vec<f64> = (0..n).map(|s| dot(&wb, n, s)).collect();
        let c: Vec<f64> = (0..n).map(|s| dot(&wc, n, s)).collect();
        for ch in 0..d {
            let delta = softplus(dot(&wd, d, ch) + bd[ch]);
            let mut acc = 0.0;
            for s in 0..n {
                let a = -al[ch * n + s].exp();
                h[ch * n + s] = (delta * a).exp() * h[ch * n + s] + delta * b[s] * ut[ch];
                acc += c[s] * h[ch * n + s];
            }
            y[t * d + ch] = acc + sk[ch] * ut[ch];
        }
    }
    y
}

/// `(FAR, FRR)` at every distinct score and one point above the maximum,
/// counted pair by pair.
pub fn brute_operating_points(bona: &[f64], spoof: &[f64]) -> Vec<(f64, f64)> {
    let mut thresholds: Vec<f64> = bona.iter().chain(spoof).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    thresholds
        .iter()
        .map(|&t| {
            let far = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
            let frr = bona.iter().filter(|&&b| b < t).count() as f64 / bona.len() as f64;
            (far, frr)
        })
        .collect()
}

/// Bounds on the equal-error rate from the two operating points that
/// bracket the FAR/FRR crossing.
pub fn brute_eer_bounds(bona: &[f64], spoof: &[f64]) -> (f64, f64) {
    let pts = brute_operating_points(bona, spoof);
    let i = pts.iter().position(|(far, frr)| far <= frr).expect("crossing exists");
    if pts[i].0 == pts[i].1 {
        return (pts[i].0, pts[i].0);
    }
    let ((far0, frr0), (far1, frr1)) = (pts[i - 1], pts[i]);
    (frr0.max(far1), far0.min(frr1))
}

/// Pairwise Mann–Whitney AUC with half credit for ties.
pub fn brute_auc(bona: &[f64], spoof: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &b in bona {
        for &s in spoof {
            twice += if b > s {
                2
            } else if b == s {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * bona.len() * spoof.len()) as f64
}

/// Random score sets of total size `2..=max_n`; a third of trials use a
/// coarse grid so ties are common.
pub fn random_score_set<R: Rng>(r: &mut R, max_n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = r.gen_range(2..=max_n);
    let nb = r.gen_range(1..n);
    let coarse = r.gen_bool(1.0 / 3.0);
    let mut draw = |shift: f64| {
        if coarse {
            r.gen_range(0..6) as f64 * 0.5
        } else {
            r.gen_range(-2.0..2.0) + shift
        }
    };
    let bona = (0..nb).map(|_| draw(0.7)).collect();
    let spoof = (0..n - nb).map(|_| draw(0.0)).collect();
    (bona, spoof)
}
