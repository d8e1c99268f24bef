//! Scattering of a centred impulse against a slow spatial-domain oracle.

use ndarray::Array2;
use num_complex::Complex64;
use scatrec::filterbank::{build_filter_bank, FilterBank, WaveletShape};
use scatrec::scattering::{scatter, Path};
use std::f64::consts::PI;
use std::path::PathBuf;

const N: usize = 32;
const FIXTURE: &str = "impulse_32_j3_k4.txt";

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(FIXTURE)
}

/// Spatial kernel by a direct inverse DFT sum.
fn spatial_kernel(resp: &Array2<f64>) -> Array2<Complex64> {
    let (h, w) = resp.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for kr in 0..h {
            for kc in 0..w {
                let ph = 2.0 * PI * ((kr * r) as f64 / h as f64 + (kc * c) as f64 / w as f64);
                acc += resp[[kr, kc]] * Complex64::from_polar(1.0, ph);
            }
        }
        acc / (h * w) as f64
    })
}

fn conv(x: &Array2<Complex64>, k: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = x.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..h {
            for b in 0..w {
                acc += x[[a, b]] * k[[(r + h - a) % h, (c + w - b) % w]];
            }
        }
        acc
    })
}

fn averaged(u: &Array2<Complex64>, phi: &Array2<Complex64>, stride: usize) -> Vec<f64> {
    let (h, w) = u.dim();
    let mut out = Vec::new();
    for r in (0..h).step_by(stride) {
        for c in (0..w).step_by(stride) {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..h {
                for b in 0..w {
                    acc += u[[a, b]] * phi[[(r + h - a) % h, (c + w - b) % w]];
                }
            }
            out.push(acc.re);
        }
    }
    out
}

fn oracle(fb: &FilterBank<f64>, x: &Array2<f64>) -> Vec<(Path, Vec<f64>)> {
    let stride = fb.stride();
    let phi = spatial_kernel(fb.phi());
    let xc = x.mapv(|v| Complex64::new(v, 0.0));
    let mut out = vec![(Path::Zero, averaged(&xc, &phi, stride))];
    let (nj, nk) = (fb.scales(), fb.orientations());
    let kernels: Vec<Vec<Array2<Complex64>>> = (1..=nj)
        .map(|j| (1..=nk).map(|k| spatial_kernel(fb.psi(j, k))).collect())
        .collect();
    let mut u1s = Vec::new();
    for j in 1..=nj {
        for k in 1..=nk {
            let u1 = conv(&xc, &kernels[j - 1][k - 1]).mapv(|z| Complex64::new(z.norm(), 0.0));
            out.push((Path::First { j, k }, averaged(&u1, &phi, stride)));
            u1s.push(((j, k), u1));
        }
    }
    for ((j, k), u1) in &u1s {
        for j2 in j + 1..=nj {
            for k2 in 1..=nk {
                let u2 = conv(u1, &kernels[j2 - 1][k2 - 1]).mapv(|z| Complex64::new(z.norm(), 0.0));
                out.push((Path::Second { j: *j, k: *k, j2, k2 }, averaged(&u2, &phi, stride)));
            }
        }
    }
    out
}

fn impulse() -> Array2<f64> {
    let mut x = Array2::zeros((N, N));
    x[[N / 2, N / 2]] = 1.0;
    x
}

fn bank() -> FilterBank<f64> {
    build_filter_bank(N, N, 3, 4, WaveletShape::default()).unwrap()
}

fn read_fixture() -> Vec<(Path, Vec<f64>)> {
    let text = std::fs::read_to_string(fixture_path()).expect("fixture present");
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            let p: Path = it.next().unwrap().parse().unwrap();
            (p, it.map(|v| v.parse::<f64>().unwrap()).collect())
        })
        .collect()
}

#[test]
fn impulse_matches_spatial_oracle() {
    let fb = bank();
    let fast = scatter(&impulse(), &fb, 2).unwrap();
    let slow = oracle(&fb, &impulse());
    assert_eq!(fast.paths.len(), slow.len());
    for (p, (path, vals)) in slow.iter().enumerate() {
        assert_eq!(fast.paths[p], *path);
        for (a, b) in fast.block(p).iter().zip(vals) {
            assert!((a - b).abs() < 1e-10, "{path}: {a} vs {b}");
        }
    }
}

#[test]
fn impulse_matches_frozen_fixture() {
    let fb = bank();
    let fast = scatter(&impulse(), &fb, 2).unwrap();
    let frozen = read_fixture();
    assert_eq!(frozen.len(), fast.paths.len());
    for (p, (path, vals)) in frozen.iter().enumerate() {
        assert_eq!(fast.paths[p], *path);
        for (a, b) in fast.block(p).iter().zip(vals) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{path}: {a} vs {b}");
        }
    }
}

/// Rewrites the fixture from the slow oracle.
#[test]
#[ignore]
fn regenerate_impulse_fixture() {
    let slow = oracle(&bank(), &impulse());
    let mut text = String::from("# path then 16 values (4x4 block, row-major); centred impulse, 32x32, J=3, K=4\n");
    for (p, vals) in slow {
        text.push_str(&p.to_string());
        for v in vals {
            text.push_str(&format!(" {v:.17e}"));
        }
        text.push('\n');
    }
    std::fs::write(fixture_path(), text).unwrap();
}
