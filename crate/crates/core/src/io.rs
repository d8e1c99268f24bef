//! File formats.
//!
//! Binary files share one layout: a text header of `key value` lines that
//! starts with `scatrec <kind>` and ends with a line `end`, followed by
//! little-endian reals whose width is given by the `dtype` key. Values are
//! converted to the requested scalar type on load.
//!
//! Viewable images are 16-bit binary PGM (big-endian samples, as the format
//! requires).

use crate::error::{Error, Result};
use crate::estimator::{LinearEstimator, Structure};
use crate::filterbank::FilterBank;
use crate::operators::Sinogram;
use crate::scattering::{Path, ScatteringVector};
use crate::Real;
use ndarray::{Array1, Array2};
use std::collections::BTreeMap;
use std::path::Path as FsPath;

struct Header {
    kind: String,
    fields: BTreeMap<String, String>,
}

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("{} header lacks {key:?}", self.kind)))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("bad integer for {key:?}")))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("bad real for {key:?}")))
    }

    fn list<V: std::str::FromStr>(&self, key: &str) -> Result<Vec<V>> {
        self.get(key)?
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Format(format!("bad entry {t:?} in {key:?}")))
            })
            .collect()
    }
}

fn write_header<T: Real>(kind: &str, fields: &[(&str, String)]) -> Vec<u8> {
    let mut s = format!("scatrec {kind}\ndtype {}\n", T::DTYPE);
    for (k, v) in fields {
        s.push_str(&format!("{k} {v}\n"));
    }
    s.push_str("end\n");
    s.into_bytes()
}

fn parse_header<'a>(bytes: &'a [u8], expected: &str) -> Result<(Header, &'a [u8])> {
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let nl = bytes[pos..]
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| Error::Format("unterminated header".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|_| Error::Format("non-UTF-8 header".into()))?;
        pos += nl + 1;
        if line == "end" {
            break;
        }
        lines.push(line.to_string());
    }
    let first = lines.first().ok_or_else(|| Error::Format("empty header".into()))?;
    let kind = first
        .strip_prefix("scatrec ")
        .ok_or_else(|| Error::Format(format!("bad magic {first:?}")))?
        .to_string();
    if kind != expected {
        return Err(Error::Format(format!("expected a {expected} file, found {kind}")));
    }
    let mut fields = BTreeMap::new();
    for line in &lines[1..] {
        let (k, v) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        fields.insert(k.to_string(), v.to_string());
    }
    Ok((Header { kind, fields }, &bytes[pos..]))
}

fn push_values<T: Real>(out: &mut Vec<u8>, values: impl IntoIterator<Item = T>) {
    for v in values {
        v.write_le(out);
    }
}

fn read_values<T: Real>(h: &Header, payload: &[u8], count: usize) -> Result<Vec<T>> {
    let dtype = h.get("dtype")?;
    let width = match dtype {
        "f32" => 4,
        "f64" => 8,
        other => return Err(Error::Format(format!("unknown dtype {other:?}"))),
    };
    if payload.len() != count * width {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            count * width
        )));
    }
    Ok(payload
        .chunks_exact(width)
        .map(|c| {
            if width == 4 {
                T::lit(f32::read_le(c) as f64)
            } else {
                T::lit(f64::read_le(c))
            }
        })
        .collect())
}

fn join<V: ToString>(v: impl IntoIterator<Item = V>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn f64_text(v: f64) -> String {
    // Round-trips exactly through `parse::<f64>`.
    format!("{v:?}")
}

pub fn encode_image<T: Real>(img: &Array2<T>) -> Vec<u8> {
    let (r, c) = img.dim();
    let mut out = write_header::<T>("image", &[("rows", r.to_string()), ("cols", c.to_string())]);
    push_values(&mut out, img.iter().copied());
    out
}

pub fn decode_image<T: Real>(bytes: &[u8]) -> Result<Array2<T>> {
    let (h, payload) = parse_header(bytes, "image")?;
    let (r, c) = (h.usize("rows")?, h.usize("cols")?);
    let v = read_values(&h, payload, r * c)?;
    Ok(Array2::from_shape_vec((r, c), v).expect("checked length"))
}

/// 16-bit PGM. Values are mapped linearly from `range` (default: the image
/// min/max) to `0..=65535`, clamping outside it.
pub fn encode_pgm<T: Real>(img: &Array2<T>, range: Option<(f64, f64)>) -> Vec<u8> {
    let (r, c) = img.dim();
    let (lo, hi) = range.unwrap_or_else(|| {
        img.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v.to_f64_lossy()), b.max(v.to_f64_lossy()))
        })
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{c} {r}\n65535\n").into_bytes();
    for v in img.iter() {
        let q = (((v.to_f64_lossy() - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Reads a 16-bit PGM as values in `[0, 1]`.
pub fn decode_pgm<T: Real>(bytes: &[u8]) -> Result<Array2<T>> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let parse = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM field {t:?}")))
    };
    if tokens[0] != "P5" || parse(&tokens[3])? != 65535 {
        return Err(Error::Format("only 16-bit binary PGM is supported".into()));
    }
    let (c, r) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let data = bytes
        .get(pos..pos + 2 * r * c)
        .ok_or_else(|| Error::Format("truncated PGM data".into()))?;
    let v = data
        .chunks_exact(2)
        .map(|b| T::lit(u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0))
        .collect();
    Ok(Array2::from_shape_vec((r, c), v).expect("checked length"))
}

pub fn encode_sinogram<T: Real>(s: &Sinogram<T>) -> Vec<u8> {
    let mut out = write_header::<T>(
        "sinogram",
        &[
            ("n_angles", s.angles.len().to_string()),
            ("n_offsets", s.offsets.len().to_string()),
            ("angles", join(s.angles.iter().map(|a| f64_text(*a)))),
            ("offsets", join(s.offsets.iter().map(|a| f64_text(*a)))),
        ],
    );
    push_values(&mut out, s.values.iter().copied());
    out
}

pub fn decode_sinogram<T: Real>(bytes: &[u8]) -> Result<Sinogram<T>> {
    let (h, payload) = parse_header(bytes, "sinogram")?;
    let (na, no) = (h.usize("n_angles")?, h.usize("n_offsets")?);
    let angles: Vec<f64> = h.list("angles")?;
    let offsets: Vec<f64> = h.list("offsets")?;
    if angles.len() != na || offsets.len() != no {
        return Err(Error::Format("sinogram angle/offset lists disagree with counts".into()));
    }
    let values = Array2::from_shape_vec((na, no), read_values(&h, payload, na * no)?).expect("checked length");
    Ok(Sinogram {
        angles,
        offsets,
        values,
    })
}

pub fn encode_scattering<T: Real>(s: &ScatteringVector<T>) -> Vec<u8> {
    let mut out = write_header::<T>(
        "scattering",
        &[
            ("source_shape", format!("{} {}", s.source_shape.0, s.source_shape.1)),
            ("scales", s.scales.to_string()),
            ("orientations", s.orientations.to_string()),
            ("max_order", s.max_order.to_string()),
            ("stride", s.spatial_stride.to_string()),
            ("paths", join(&s.paths)),
        ],
    );
    push_values(&mut out, s.values.iter().copied());
    out
}

pub fn decode_scattering<T: Real>(bytes: &[u8]) -> Result<ScatteringVector<T>> {
    let (h, payload) = parse_header(bytes, "scattering")?;
    let shape: Vec<usize> = h.list("source_shape")?;
    let [sh, sw] = shape[..] else {
        return Err(Error::Format("source_shape needs two entries".into()));
    };
    let stride = h.usize("stride")?;
    if stride == 0 {
        return Err(Error::Format("zero stride".into()));
    }
    let paths: Vec<Path> = h.list("paths")?;
    let count = paths.len() * (sh / stride) * (sw / stride);
    Ok(ScatteringVector {
        values: read_values(&h, payload, count)?,
        paths,
        spatial_stride: stride,
        source_shape: (sh, sw),
        scales: h.usize("scales")?,
        orientations: h.usize("orientations")?,
        max_order: h.usize("max_order")?,
    })
}

fn structure_token(s: Structure) -> String {
    match s {
        Structure::Dense => "dense".into(),
        Structure::Shared { block_len } => format!("shared:{block_len}"),
    }
}

fn parse_structure(t: &str) -> Result<Structure> {
    match t.split_once(':') {
        None if t == "dense" => Ok(Structure::Dense),
        Some(("shared", n)) => Ok(Structure::Shared {
            block_len: n.parse().map_err(|_| Error::Format(format!("bad structure {t:?}")))?,
        }),
        _ => Err(Error::Format(format!("bad structure {t:?}"))),
    }
}

/// `ridge` is stored for provenance only.
pub fn encode_estimator<T: Real>(e: &LinearEstimator<T>, ridge: f64) -> Vec<u8> {
    let (dx, dz) = e.dims();
    let mut out = write_header::<T>(
        "estimator",
        &[
            ("dim_x", dx.to_string()),
            ("dim_z", dz.to_string()),
            ("g_shape", format!("{} {}", e.g.nrows(), e.g.ncols())),
            ("h_len", e.h.len().to_string()),
            ("ridge", f64_text(ridge)),
            ("iteration_tag", e.iteration_tag.to_string()),
            ("structure", structure_token(e.structure)),
        ],
    );
    push_values(&mut out, e.g.iter().copied());
    push_values(&mut out, e.h.iter().copied());
    out
}

/// Returns the estimator and the stored ridge.
pub fn decode_estimator<T: Real>(bytes: &[u8]) -> Result<(LinearEstimator<T>, f64)> {
    let (h, payload) = parse_header(bytes, "estimator")?;
    let gs: Vec<usize> = h.list("g_shape")?;
    let [gr, gc] = gs[..] else {
        return Err(Error::Format("g_shape needs two entries".into()));
    };
    let dim_x = h.usize("dim_x")?;
    let structure = parse_structure(h.get("structure")?)?;
    let mut v = read_values(&h, payload, gr * gc + h.usize("h_len")?)?;
    let hv = v.split_off(gr * gc);
    let est = LinearEstimator {
        g: Array2::from_shape_vec((gr, gc), v).expect("checked length"),
        h: Array1::from_vec(hv),
        iteration_tag: h.usize("iteration_tag")?,
        structure,
    };
    if est.dims() != (dim_x, h.usize("dim_z")?) {
        return Err(Error::Format("estimator dimensions disagree with G".into()));
    }
    Ok((est, h.f64("ridge")?))
}

/// Filter responses, one real and one imaginary plane per filter, in the
/// order `psi(1,1) .. psi(J,K), phi`.
pub fn encode_filters<T: Real>(fb: &FilterBank<T>) -> Vec<u8> {
    let mut out = write_header::<T>(
        "filters",
        &[
            ("width", fb.width().to_string()),
            ("height", fb.height().to_string()),
            ("J", fb.scales().to_string()),
            ("K", fb.orientations().to_string()),
        ],
    );
    let mut planes = Vec::new();
    for j in 1..=fb.scales() {
        for k in 1..=fb.orientations() {
            planes.push(fb.psi(j, k));
        }
    }
    planes.push(fb.phi());
    for p in planes {
        push_values(&mut out, p.iter().copied());
        push_values(&mut out, std::iter::repeat_n(T::zero(), p.len()));
    }
    out
}

pub fn save(path: impl AsRef<FsPath>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load(path: impl AsRef<FsPath>) -> Result<Vec<u8>> {
    Ok(std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit_lmmse, fit_moments};
    use crate::filterbank::{build_filter_bank, WaveletShape};
    use crate::operators::Radon;
    use crate::scattering::scatter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.random::<f64>() - 0.3)
    }

    #[test]
    fn image_round_trip_bit_exact() {
        let img = random(5, 7, 1);
        assert_eq!(decode_image::<f64>(&encode_image(&img)).unwrap(), img);
        let img32 = img.mapv(|v| v as f32);
        assert_eq!(decode_image::<f32>(&encode_image(&img32)).unwrap(), img32);
        // f32 file read as f64 widens exactly.
        assert_eq!(
            decode_image::<f64>(&encode_image(&img32)).unwrap(),
            img32.mapv(|v| v as f64)
        );
    }

    #[test]
    fn corrupt_files_rejected() {
        let mut bytes = encode_image(&random(3, 3, 2));
        bytes.pop();
        assert!(matches!(decode_image::<f64>(&bytes), Err(Error::Format(_))));
        assert!(decode_sinogram::<f64>(&encode_image(&random(3, 3, 2))).is_err());
        assert!(decode_image::<f64>(b"garbage").is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let img = random(4, 6, 3).mapv(|v| v.clamp(0.0, 1.0));
        let back: Array2<f64> = decode_pgm(&encode_pgm(&img, Some((0.0, 1.0)))).unwrap();
        assert_eq!(back.dim(), (4, 6));
        assert!((&back - &img).iter().all(|d| d.abs() <= 0.5 / 65535.0 + 1e-12));
        assert!(encode_pgm(&img, None).starts_with(b"P5\n6 4\n65535\n"));
    }

    #[test]
    fn sinogram_round_trip() {
        let radon = Radon::<f64>::new(8, &[0.0, 33.5, 90.0]).unwrap();
        let s = radon.sinogram(&random(8, 8, 4)).unwrap();
        let back = decode_sinogram::<f64>(&encode_sinogram(&s)).unwrap();
        assert_eq!(back.angles, s.angles);
        assert_eq!(back.offsets, s.offsets);
        assert_eq!(back.values, s.values);
    }

    #[test]
    fn scattering_round_trip() {
        let fb = build_filter_bank::<f64>(16, 16, 2, 4, WaveletShape::default()).unwrap();
        let s = scatter(&random(16, 16, 5), &fb, 2).unwrap();
        let back = decode_scattering::<f64>(&encode_scattering(&s)).unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!(back.paths, s.paths);
        assert_eq!(
            (back.source_shape, back.spatial_stride, back.max_order),
            (s.source_shape, s.spatial_stride, s.max_order)
        );
    }

    #[test]
    fn estimator_round_trip() {
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|s| random(1, 4, 10 + s).into_raw_vec_and_offset().0)
            .collect();
        let zs: Vec<Vec<f64>> = (0..20)
            .map(|s| random(1, 6, 40 + s).into_raw_vec_and_offset().0)
            .collect();
        for structure in [Structure::Dense, Structure::Shared { block_len: 2 }] {
            let mm = fit_moments(&xs, &zs, Some(1e-3), structure).unwrap();
            let est = fit_lmmse(&mm, 3).unwrap();
            let (back, ridge) = decode_estimator::<f64>(&encode_estimator(&est, 1e-3)).unwrap();
            assert_eq!(back.g, est.g);
            assert_eq!(back.h, est.h);
            assert_eq!(back.iteration_tag, 3);
            assert_eq!(back.structure, structure);
            assert_eq!(ridge, 1e-3);
        }
    }

    #[test]
    fn filter_dump_size() {
        let fb = build_filter_bank::<f64>(16, 16, 2, 3, WaveletShape::default()).unwrap();
        let bytes = encode_filters(&fb);
        let (h, payload) = parse_header(&bytes, "filters").unwrap();
        assert_eq!(h.usize("K").unwrap(), 3);
        assert_eq!(payload.len(), (2 * 3 + 1) * 2 * 256 * 8);
    }
}
