//! Brute-force reference implementations of the evaluation metrics, written
//! pixel by pixel with no shared code from the library, plus the golden
//! (P, G) corpus they are checked on.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub const SIDE: usize = 16;
const EPS: f64 = f64::EPSILON;

/// One prediction/ground-truth pair, row-major.
#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub h: usize,
    pub w: usize,
    /// 8-bit prediction levels; the prediction is `level / 255`.
    pub p: Vec<u8>,
    pub g: Vec<bool>,
}

impl Case {
    pub fn pf(&self) -> Vec<f64> {
        self.p.iter().map(|&v| v as f64 / 255.0).collect()
    }
}

/// Location of the corpus inside the core crate (for regeneration).
pub fn corpus_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/metric_corpus.txt")
}

/// Text form: per case a `case <name> <h> <w>` line, a `p` line of levels
/// and a `g` line of 0/1 characters.
pub fn render_corpus(cases: &[Case]) -> String {
    let mut out = String::new();
    for c in cases {
        out.push_str(&format!("case {} {} {}\n", c.name, c.h, c.w));
        let p: Vec<String> = c.p.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("p {}\n", p.join(" ")));
        let g: String = c.g.iter().map(|&b| if b { '1' } else { '0' }).collect();
        out.push_str(&format!("g {g}\n"));
    }
    out
}

pub fn parse_corpus(text: &str) -> Vec<Case> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    lines
        .chunks(3)
        .map(|ch| {
            let head: Vec<&str> = ch[0].split_whitespace().collect();
            assert_eq!(head[0], "case");
            let (h, w) = (head[2].parse().unwrap(), head[3].parse().unwrap());
            let p: Vec<u8> = ch[1].strip_prefix("p ").unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
            let g: Vec<bool> = ch[2].strip_prefix("g ").unwrap().chars().map(|c| c == '1').collect();
            assert_eq!((p.len(), g.len()), (h * w, h * w));
            Case {
                name: head[1].to_string(),
                h,
                w,
                p,
                g,
            }
        })
        .collect()
}

/// The shipped corpus, embedded so any test crate can use it.
pub const GOLDEN: &str = include_str!("../data/metric_corpus.txt");

pub fn load_corpus() -> Vec<Case> {
    parse_corpus(GOLDEN)
}

/// The 50 random pairs followed by the 10 degenerate ones.
pub fn generate_corpus() -> Vec<Case> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20_240_229);
    let n = SIDE * SIDE;
    let mut cases = Vec::new();
    for k in 0..50 {
        // Ground truth: one or two random rectangles, sometimes speckled.
        let mut g = vec![false; n];
        for _ in 0..rng.random_range(1..=2) {
            let (r0, c0) = (rng.random_range(0..SIDE - 2), rng.random_range(0..SIDE - 2));
            let (r1, c1) = (rng.random_range(r0 + 1..=SIDE), rng.random_range(c0 + 1..=SIDE));
            for i in r0..r1 {
                for j in c0..c1 {
                    g[i * SIDE + j] = true;
                }
            }
        }
        if k % 5 == 4 {
            for v in g.iter_mut() {
                if rng.random_bool(0.08) {
                    *v = !*v;
                }
            }
        }
        if g.iter().all(|&b| b) || !g.iter().any(|&b| b) {
            g[0] = !g[0];
        }
        // Prediction: pure noise, noisy ground truth, or a binary guess.
        let p: Vec<u8> = match k % 3 {
            0 => (0..n).map(|_| rng.random_range(0..=255)).collect(),
            1 => g
                .iter()
                .map(|&b| {
                    let base: f64 = if b { 190.0 } else { 50.0 };
                    (base + rng.random_range(-60.0..60.0)).clamp(0.0, 255.0).round() as u8
                })
                .collect(),
            _ => g.iter().map(|&b| if rng.random_bool(0.85) == b { 255 } else { 0 }).collect(),
        };
        cases.push(Case {
            name: format!("random_{k:02}"),
            h: SIDE,
            w: SIDE,
            p,
            g,
        });
    }
    let noise: Vec<u8> = (0..n).map(|_| rng.random_range(0..=255)).collect();
    let square: Vec<bool> = (0..n).map(|i| (4..11).contains(&(i / SIDE)) && (3..9).contains(&(i % SIDE))).collect();
    let ring: Vec<bool> = (0..n)
        .map(|i| {
            let (r, c) = ((i / SIDE) as f64 - 7.5, (i % SIDE) as f64 - 7.5);
            (9.0..40.0).contains(&(r * r + c * c))
        })
        .collect();
    let level = |g: &[bool], invert: bool| -> Vec<u8> { g.iter().map(|&b| if b != invert { 255 } else { 0 }).collect() };
    let empty = vec![false; n];
    let full = vec![true; n];
    let degenerate = [
        ("empty_g_noise", noise.clone(), empty.clone()),
        ("empty_g_zero", vec![0; n], empty.clone()),
        ("empty_g_one", vec![255; n], empty.clone()),
        ("full_g_noise", noise.clone(), full.clone()),
        ("full_g_one", vec![255; n], full.clone()),
        ("full_g_zero", vec![0; n], full),
        ("p_eq_g_square", level(&square, false), square.clone()),
        ("p_eq_g_ring", level(&ring, false), ring.clone()),
        ("p_inv_g_square", level(&square, true), square),
        ("p_inv_g_ring", level(&ring, true), ring),
    ];
    for (name, p, g) in degenerate {
        cases.push(Case {
            name: name.to_string(),
            h: SIDE,
            w: SIDE,
            p,
            g,
        });
    }
    cases
}

pub fn mae(p: &[f64], g: &[bool]) -> f64 {
    p.iter().zip(g).map(|(a, &b)| (a - if b { 1.0 } else { 0.0 }).abs()).sum::<f64>() / p.len() as f64
}

/// IoU and pixel accuracy of `P >= 0.5`; two empty masks have IoU 1.
pub fn iou_acc(p: &[f64], g: &[bool]) -> (f64, f64) {
    let mut inter = 0;
    let mut union = 0;
    let mut same = 0;
    for (a, &b) in p.iter().zip(g) {
        let f = *a >= 0.5;
        if f && b {
            inter += 1;
        }
        if f || b {
            union += 1;
        }
        if f == b {
            same += 1;
        }
    }
    let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    (iou, same as f64 / p.len() as f64)
}

fn cut(t: usize) -> f64 {
    t as f64 / 255.0
}

/// Precision and recall of `P >= t/255` for t in 0..=255.
pub fn pr_curve(p: &[f64], g: &[bool]) -> Vec<(f64, f64)> {
    let pos = g.iter().filter(|&&b| b).count() as f64;
    (0..256)
        .map(|t| {
            let (mut tp, mut pp) = (0.0, 0.0);
            for (a, &b) in p.iter().zip(g) {
                if *a >= cut(t) {
                    pp += 1.0;
                    if b {
                        tp += 1.0;
                    }
                }
            }
            (if pp == 0.0 { 0.0 } else { tp / pp }, tp / pos)
        })
        .collect()
}

/// Max and mean over thresholds of F(β² = 0.3) built from precision and
/// recall averaged across images with a non-empty ground truth.
pub fn f_max_mean(cases: &[(Vec<f64>, Vec<bool>)]) -> (f64, f64) {
    let curves: Vec<Vec<(f64, f64)>> = cases
        .iter()
        .filter(|(_, g)| g.iter().any(|&b| b))
        .map(|(p, g)| pr_curve(p, g))
        .collect();
    let n = curves.len() as f64;
    let f: Vec<f64> = (0..256)
        .map(|t| {
            let pr = curves.iter().map(|c| c[t].0).sum::<f64>() / n;
            let re = curves.iter().map(|c| c[t].1).sum::<f64>() / n;
            let den = 0.3 * pr + re;
            if den == 0.0 {
                0.0
            } else {
                1.3 * pr * re / den
            }
        })
        .collect();
    (f.iter().cloned().fold(0.0, f64::max), f.iter().sum::<f64>() / 256.0)
}

/// Per-threshold enhanced alignment, summed pixel by pixel.
pub fn e_curve(p: &[f64], g: &[bool]) -> Vec<f64> {
    let n = p.len() as f64;
    let gf: Vec<f64> = g.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mu_g = gf.iter().sum::<f64>() / n;
    (0..256)
        .map(|t| {
            let fm: Vec<f64> = p.iter().map(|a| if *a >= cut(t) { 1.0 } else { 0.0 }).collect();
            if mu_g == 0.0 {
                return fm.iter().map(|v| 1.0 - v).sum::<f64>() / n;
            }
            if mu_g == 1.0 {
                return fm.iter().sum::<f64>() / n;
            }
            let mu_p = fm.iter().sum::<f64>() / n;
            let mut total = 0.0;
            for (x, y) in gf.iter().zip(&fm) {
                let (a, b) = (x - mu_g, y - mu_p);
                let den = a * a + b * b;
                let xi = if den == 0.0 { 1.0 } else { 2.0 * a * b / den };
                total += (xi + 1.0).powi(2) / 4.0;
            }
            total / n
        })
        .collect()
}

pub fn e_max_mean(cases: &[(Vec<f64>, Vec<bool>)]) -> (f64, f64) {
    let curves: Vec<Vec<f64>> = cases.iter().map(|(p, g)| e_curve(p, g)).collect();
    let n = curves.len() as f64;
    let avg: Vec<f64> = (0..256).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / n).collect();
    (avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max), avg.iter().sum::<f64>() / 256.0)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    };
    (m, var.sqrt())
}

fn object_term(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let (m, sd) = mean_std(xs);
    2.0 * m / (m * m + 1.0 + sd + EPS)
}

fn ssim(p: &[f64], g: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.len() as f64;
    let (x, y) = (p.iter().sum::<f64>() / n, g.iter().sum::<f64>() / n);
    let d = if p.len() < 2 { f64::INFINITY } else { n - 1.0 };
    let sxx = p.iter().map(|a| (a - x).powi(2)).sum::<f64>() / d;
    let syy = g.iter().map(|b| (b - y).powi(2)).sum::<f64>() / d;
    let sxy = p.iter().zip(g).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / d;
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sxx + syy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Structure measure, α = 0.5; the region split sits one past the
/// ties-to-even rounded foreground centroid.
pub fn s_measure(p: &[f64], g: &[bool], h: usize, w: usize) -> f64 {
    let mu = g.iter().filter(|&&b| b).count() as f64 / g.len() as f64;
    if mu == 0.0 {
        return (1.0 - p.iter().sum::<f64>() / p.len() as f64).clamp(0.0, 1.0);
    }
    if mu == 1.0 {
        return (p.iter().sum::<f64>() / p.len() as f64).clamp(0.0, 1.0);
    }
    let fg: Vec<f64> = p.iter().zip(g).filter(|(_, &b)| b).map(|(a, _)| *a).collect();
    let bg: Vec<f64> = p.iter().zip(g).filter(|(_, &b)| !b).map(|(a, _)| 1.0 - a).collect();
    let object = mu * object_term(&fg) + (1.0 - mu) * object_term(&bg);

    let (mut sr, mut sc, mut k) = (0.0, 0.0, 0.0);
    for i in 0..h {
        for j in 0..w {
            if g[i * w + j] {
                sr += i as f64;
                sc += j as f64;
                k += 1.0;
            }
        }
    }
    let y = ((sr / k).round_ties_even() as usize + 1).min(h);
    let x = ((sc / k).round_ties_even() as usize + 1).min(w);
    let gf: Vec<f64> = g.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut region = 0.0;
    for (rows, cols) in [(0..y, 0..x), (0..y, x..w), (y..h, 0..x), (y..h, x..w)] {
        let (mut pb, mut gb) = (Vec::new(), Vec::new());
        for i in rows.clone() {
            for j in cols.clone() {
                pb.push(p[i * w + j]);
                gb.push(gf[i * w + j]);
            }
        }
        region += pb.len() as f64 / (h * w) as f64 * ssim(&pb, &gb);
    }
    (0.5 * object + 0.5 * region).clamp(0.0, 1.0)
}

/// Weighted F-measure with the 7×7, σ = 5 Gaussian and the ln(0.5)/5 decay.
/// Nearest foreground pixels come from exhaustive search; ties prefer the
/// smaller column, then the smaller row.
pub fn weighted_f(p: &[f64], g: &[bool], h: usize, w: usize) -> f64 {
    let fgs: Vec<(usize, usize)> = (0..h * w).filter(|&k| g[k]).map(|k| (k / w, k % w)).collect();
    let gf = |k: usize| if g[k] { 1.0 } else { 0.0 };
    let e: Vec<f64> = (0..h * w).map(|k| (p[k] - gf(k)).abs()).collect();
    let mut dist = vec![0.0; h * w];
    let mut et = e.clone();
    for i in 0..h {
        for j in 0..w {
            let best = fgs
                .iter()
                .min_by_key(|&&(r, c)| {
                    let d = (r as i64 - i as i64).pow(2) + (c as i64 - j as i64).pow(2);
                    (d, c, r)
                })
                .unwrap();
            dist[i * w + j] = ((best.0 as f64 - i as f64).powi(2) + (best.1 as f64 - j as f64).powi(2)).sqrt();
            if !g[i * w + j] {
                et[i * w + j] = e[best.0 * w + best.1];
            }
        }
    }
    let mut kernel = [[0.0; 7]; 7];
    let mut ksum = 0.0;
    for (a, row) in kernel.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (y, x) = (a as f64 - 3.0, b as f64 - 3.0);
            *v = (-(x * x + y * y) / (2.0 * 25.0)).exp();
            ksum += *v;
        }
    }
    let mut ew = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let mut ea = 0.0;
            for (a, row) in kernel.iter().enumerate() {
                for (b, kv) in row.iter().enumerate() {
                    let (y, x) = (i as i64 + a as i64 - 3, j as i64 + b as i64 - 3);
                    if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                        ea += kv / ksum * et[y as usize * w + x as usize];
                    }
                }
            }
            ew[k] = if g[k] {
                ea.min(e[k])
            } else {
                e[k] * (2.0 - (0.5f64.ln() / 5.0 * dist[k]).exp())
            };
        }
    }
    let n_fg = fgs.len() as f64;
    let fg_sum: f64 = (0..h * w).filter(|&k| g[k]).map(|k| ew[k]).sum();
    let bg_sum: f64 = (0..h * w).filter(|&k| !g[k]).map(|k| ew[k]).sum();
    let tp = n_fg - fg_sum;
    let recall = 1.0 - fg_sum / n_fg;
    let precision = tp / (EPS + tp + bg_sum);
    (2.0 * recall * precision / (EPS + recall + precision)).clamp(0.0, 1.0)
}

/// The nine dataset-level values in table order:
/// mIoU, Acc, F_max, F_mean, F_W, S, E_max, E_mean, MAE.
pub fn report(cases: &[Case]) -> [f64; 9] {
    let pairs: Vec<(Vec<f64>, Vec<bool>)> = cases.iter().map(|c| (c.pf(), c.g.clone())).collect();
    let n = cases.len() as f64;
    let ia: Vec<(f64, f64)> = pairs.iter().map(|(p, g)| iou_acc(p, g)).collect();
    let (f_max, f_mean) = f_max_mean(&pairs);
    let fw: Vec<f64> = cases
        .iter()
        .filter(|c| c.g.iter().any(|&b| b))
        .map(|c| weighted_f(&c.pf(), &c.g, c.h, c.w))
        .collect();
    let (e_max, e_mean) = e_max_mean(&pairs);
    [
        ia.iter().map(|v| v.0).sum::<f64>() / n,
        ia.iter().map(|v| v.1).sum::<f64>() / n,
        f_max,
        f_mean,
        fw.iter().sum::<f64>() / fw.len() as f64,
        cases.iter().map(|c| s_measure(&c.pf(), &c.g, c.h, c.w)).sum::<f64>() / n,
        e_max,
        e_mean,
        pairs.iter().map(|(p, g)| mae(p, g)).sum::<f64>() / n,
    ]
}
