//! The experiment steps. Each reads its inputs from, and writes its outputs
//! under, `experiment.output`; every output directory gets a
//! `provenance.toml` with the resolved config.

use crate::{CliError, ExperimentConfig};
use ndarray::{s, Array2};
use rayon::prelude::*;
use scatrec::filterbank::{build_filter_bank, FilterBank, WaveletShape};
use scatrec::io;
use scatrec::metrics;
use scatrec::{baselines, processes, solver, LinearEstimator64};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const PANELS: [&str; 4] = ["original", "projection", "iter1", "final"];
pub const TABLE_HEADER: &str = "experiment,mse,excess_kurtosis";

/// One row of `evaluation/metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SetMetrics {
    pub set: String,
    pub mse: f64,
    pub excess_kurtosis: f64,
    pub rank: usize,
}

pub struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    root: PathBuf,
    command: String,
}

fn missing(path: &Path) -> CliError {
    CliError::MissingInput(path.display().to_string())
}

impl<'a> Pipeline<'a> {
    /// `command` is recorded in the provenance sidecars.
    pub fn new(cfg: &'a ExperimentConfig, command: impl Into<String>) -> Self {
        Self {
            cfg,
            root: cfg.experiment.output.clone(),
            command: command.into(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        io::save(path, bytes).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
    }

    fn provenance(&self, dir: &Path) -> Result<(), CliError> {
        let mut t = toml::Table::new();
        t.insert("command".into(), self.command.clone().into());
        t.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        t.insert(
            "config".into(),
            toml::Value::try_from(self.cfg).map_err(|e| CliError::Other(e.to_string()))?,
        );
        self.write(
            &dir.join("provenance.toml"),
            toml::to_string(&t).expect("table serializes").as_bytes(),
        )
    }

    fn read_image(&self, path: &Path) -> Result<Array2<f64>, CliError> {
        if !path.is_file() {
            return Err(missing(path));
        }
        Ok(io::decode_image(&io::load(path)?)?)
    }

    /// Writes `<stem>.img` (lossless) and `<stem>.pgm`.
    fn write_image(&self, stem: &Path, img: &Array2<f64>) -> Result<(), CliError> {
        self.write(&stem.with_extension("img"), &io::encode_image(img))?;
        self.write(&stem.with_extension("pgm"), &io::encode_pgm(img, None))
    }

    fn realization_path(&self, test: bool, i: usize) -> PathBuf {
        self.dir("realizations")
            .join(format!("{}_{i:03}", if test { "test" } else { "train" }))
    }

    fn model_path(&self, k: usize) -> PathBuf {
        self.dir("models").join(format!("estimator_{k:02}.bin"))
    }

    fn panel_path(&self, i: usize, panel: &str) -> PathBuf {
        self.dir("reconstructions").join(format!("test_{i:03}")).join(panel)
    }

    fn baseline_path(&self, name: &str, i: usize) -> PathBuf {
        self.dir("baselines").join(name).join(format!("test_{i:03}"))
    }

    fn filter_bank(&self) -> Result<FilterBank<f64>, CliError> {
        let n = self.cfg.process.size;
        let sc = &self.cfg.scattering;
        build_filter_bank(n, n, sc.scales, sc.orientations, WaveletShape::default())
            .map_err(|e| CliError::Config(e.to_string()))
    }

    fn load_set(&self, test: bool) -> Result<Vec<Array2<f64>>, CliError> {
        let n = if test {
            self.cfg.experiment.n_test
        } else {
            self.cfg.experiment.n_train
        };
        (0..n)
            .map(|i| self.read_image(&self.realization_path(test, i).with_extension("img")))
            .collect()
    }

    pub fn generate(&self) -> Result<(), CliError> {
        let e = &self.cfg.experiment;
        log::info!("generate: {} training and {} test realizations", e.n_train, e.n_test);
        let jobs: Vec<(bool, usize)> = (0..e.n_train)
            .map(|i| (false, i))
            .chain((0..e.n_test).map(|i| (true, i)))
            .collect();
        let imgs: Vec<Array2<f64>> = jobs
            .par_iter()
            .map(|&(test, i)| {
                Ok(processes::sample(
                    &self.cfg.process_spec(self.cfg.realization_seed(test, i))?,
                )?)
            })
            .collect::<Result<_, CliError>>()?;
        for (&(test, i), img) in jobs.iter().zip(&imgs) {
            self.write_image(&self.realization_path(test, i), img)?;
        }
        self.provenance(&self.dir("realizations"))
    }

    pub fn train(&self) -> Result<(), CliError> {
        let ensemble = self.load_set(false)?;
        let op = self.cfg.operator()?;
        let fb = self.filter_bank()?;
        let scfg = self.cfg.solver_config()?;
        log::info!(
            "train: {} images, {} outer iterations",
            ensemble.len(),
            scfg.outer_iterations
        );
        let training = solver::train(&ensemble, op.as_ref(), &fb, &scfg)?;
        for (k, (est, ridge)) in training.estimators.iter().zip(&training.ridges).enumerate() {
            self.write(&self.model_path(k), &io::encode_estimator(est, *ridge))?;
        }
        let dir = self.dir("models");
        self.write(&dir.join("training_trace.csv"), training.trace.to_csv().as_bytes())?;
        self.provenance(&dir)
    }

    fn load_models(&self) -> Result<Vec<LinearEstimator64>, CliError> {
        let r = self.cfg.solver.outer_iterations;
        (0..r)
            .map(|k| {
                let p = self.model_path(k);
                if !p.is_file() {
                    return Err(missing(&p));
                }
                Ok(io::decode_estimator(&io::load(&p)?)?.0)
            })
            .collect()
    }

    pub fn reconstruct(&self) -> Result<(), CliError> {
        let estimators = self.load_models()?;
        let tests = self.load_set(true)?;
        let op = self.cfg.operator()?;
        let fb = self.filter_bank()?;
        let scfg = self.cfg.solver_config()?;
        log::info!("reconstruct: {} test images", tests.len());
        let results: Vec<_> = tests
            .par_iter()
            .map(|x| {
                let y = op.apply(x)?;
                let rec = solver::reconstruct(&y, op.as_ref(), &fb, &estimators, &scfg, Some(x))?;
                Ok((y, rec))
            })
            .collect::<Result<_, CliError>>()?;
        for (i, (x, (y, rec))) in tests.iter().zip(&results).enumerate() {
            for (panel, img) in PANELS.iter().zip([x, &rec.projection, &rec.first_iterate, &rec.image]) {
                self.write_image(&self.panel_path(i, panel), img)?;
            }
            self.write(&self.panel_path(i, "measurements.img"), &io::encode_image(y))?;
            self.write(&self.panel_path(i, "trace.csv"), rec.trace.to_csv().as_bytes())?;
        }
        self.provenance(&self.dir("reconstructions"))
    }

    pub fn baseline(&self) -> Result<(), CliError> {
        let tests = self.load_set(true)?;
        let op = self.cfg.operator()?;
        for b in &self.cfg.baselines {
            let bcfg = self.cfg.baseline_config(b)?;
            log::info!("baseline {}: {} iterations per image", b.name, bcfg.iterations);
            let results: Vec<_> = tests
                .par_iter()
                .map(|x| Ok(baselines::solve(&op.apply(x)?, op.as_ref(), &bcfg)?))
                .collect::<Result<_, CliError>>()?;
            for (i, r) in results.iter().enumerate() {
                let stem = self.baseline_path(&b.name, i);
                self.write_image(&stem, &r.image)?;
                self.write(
                    &stem.with_file_name(format!("test_{i:03}_objective.csv")),
                    r.objective_csv().as_bytes(),
                )?;
            }
            self.provenance(&self.dir("baselines").join(&b.name))?;
        }
        Ok(())
    }

    /// Image sets evaluated, in table order: the four panels then each
    /// baseline.
    pub fn set_names(&self) -> Vec<String> {
        PANELS
            .iter()
            .map(|s| s.to_string())
            .chain(self.cfg.baselines.iter().map(|b| b.name.clone()))
            .collect()
    }

    fn load_outputs(&self, set: &str) -> Result<Vec<Array2<f64>>, CliError> {
        (0..self.cfg.experiment.n_test)
            .map(|i| {
                let stem = if PANELS.contains(&set) {
                    self.panel_path(i, set)
                } else {
                    self.baseline_path(set, i)
                };
                self.read_image(&stem.with_extension("img"))
            })
            .collect()
    }

    pub fn evaluate(&self) -> Result<Vec<SetMetrics>, CliError> {
        let ev = &self.cfg.evaluation;
        let originals = self.load_outputs("original")?;
        let rank_tol = (ev.rank_tol > 0.0).then_some(ev.rank_tol);
        let dir = self.dir("evaluation");
        let mut rows = Vec::new();
        for set in self.set_names() {
            let imgs = self.load_outputs(&set)?;
            let mut mse = 0.0;
            for (a, b) in imgs.iter().zip(&originals) {
                mse += metrics::mse(a, b)?;
            }
            mse /= imgs.len() as f64;
            let k = metrics::set_excess_kurtosis(&imgs, ev.patch, ev.stride, rank_tol)?;
            let mut patches = Vec::new();
            for img in &imgs {
                patches.extend(metrics::patch_vectors(img, ev.cokurtosis_patch, ev.stride)?);
            }
            let panel = metrics::cokurtosis_tensor(&patches, true)?;
            self.write_image(&dir.join(format!("cokurtosis_{set}")), &panel)?;
            log::info!(
                "evaluate {set}: mse {mse:.4e}, excess kurtosis {:.4e} (rank {})",
                k.excess,
                k.rank
            );
            rows.push(SetMetrics {
                set,
                mse,
                excess_kurtosis: k.excess,
                rank: k.rank,
            });
        }
        self.write(&dir.join("metrics.csv"), metrics_csv(&rows).as_bytes())?;
        self.provenance(&dir)?;
        Ok(rows)
    }

    pub fn report(&self) -> Result<String, CliError> {
        let path = self.dir("evaluation").join("metrics.csv");
        if !path.is_file() {
            return Err(missing(&path));
        }
        let rows = parse_metrics_csv(&std::fs::read_to_string(&path)?)?;
        if rows.is_empty() {
            return Err(CliError::MissingInput(format!("{} has no rows", path.display())));
        }
        let mut table = format!("{TABLE_HEADER}\n");
        for r in &rows {
            writeln!(
                table,
                "{}/{},{:.6e},{:.6e}",
                self.cfg.experiment.name, r.set, r.mse, r.excess_kurtosis
            )
            .unwrap();
        }
        let dir = self.dir("report");
        self.write(&dir.join("table.csv"), table.as_bytes())?;

        let first: Vec<Array2<f64>> = rows
            .iter()
            .map(|r| {
                let stem = if PANELS.contains(&r.set.as_str()) {
                    self.panel_path(0, &r.set)
                } else {
                    self.baseline_path(&r.set, 0)
                };
                self.read_image(&stem.with_extension("img"))
            })
            .collect::<Result<_, _>>()?;
        let range = min_max(&first[0]);
        self.write(
            &dir.join("montage.pgm"),
            &io::encode_pgm(&tile_row(&first, 2), Some(range)),
        )?;

        let panels: Vec<Array2<f64>> = rows
            .iter()
            .map(|r| self.read_image(&self.dir("evaluation").join(format!("cokurtosis_{}.img", r.set))))
            .collect::<Result<_, _>>()?;
        let range = panels
            .iter()
            .map(min_max)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)));
        self.write(
            &dir.join("cokurtosis.pgm"),
            &io::encode_pgm(&tile_column(&panels, 2), Some(range)),
        )?;
        self.provenance(&dir)?;
        Ok(table)
    }

    pub fn run(&self) -> Result<String, CliError> {
        self.generate()?;
        self.train()?;
        self.reconstruct()?;
        self.baseline()?;
        self.evaluate()?;
        self.report()
    }
}

pub fn metrics_csv(rows: &[SetMetrics]) -> String {
    let mut s = String::from("set,mse,excess_kurtosis,rank\n");
    for r in rows {
        writeln!(s, "{},{:.10e},{:.10e},{}", r.set, r.mse, r.excess_kurtosis, r.rank).unwrap();
    }
    s
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<SetMetrics>, CliError> {
    let bad = |l: &str| CliError::Other(format!("malformed metrics row {l:?}"));
    let mut lines = text.lines();
    if lines.next() != Some("set,mse,excess_kurtosis,rank") {
        return Err(CliError::Other("metrics.csv has an unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(bad(l));
            }
            Ok(SetMetrics {
                set: f[0].to_string(),
                mse: f[1].parse().map_err(|_| bad(l))?,
                excess_kurtosis: f[2].parse().map_err(|_| bad(l))?,
                rank: f[3].parse().map_err(|_| bad(l))?,
            })
        })
        .collect()
}

fn min_max(a: &Array2<f64>) -> (f64, f64) {
    a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Side by side with `gap` columns of the minimum value between tiles.
fn tile_row(tiles: &[Array2<f64>], gap: usize) -> Array2<f64> {
    let h = tiles.iter().map(|t| t.nrows()).max().unwrap_or(0);
    let w: usize = tiles.iter().map(|t| t.ncols()).sum::<usize>() + gap * tiles.len().saturating_sub(1);
    let fill = tiles.iter().map(|t| min_max(t).0).fold(f64::INFINITY, f64::min);
    let mut out = Array2::from_elem((h, w), fill);
    let mut c = 0;
    for t in tiles {
        out.slice_mut(s![..t.nrows(), c..c + t.ncols()]).assign(t);
        c += t.ncols() + gap;
    }
    out
}

fn tile_column(tiles: &[Array2<f64>], gap: usize) -> Array2<f64> {
    let t: Vec<Array2<f64>> = tiles.iter().map(|t| t.t().to_owned()).collect();
    tile_row(&t, gap).t().to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_round_trip() {
        let rows = vec![
            SetMetrics {
                set: "original".into(),
                mse: 0.0,
                excess_kurtosis: 1760.5,
                rank: 64,
            },
            SetMetrics {
                set: "l1".into(),
                mse: 1.25e-2,
                excess_kurtosis: -3.0,
                rank: 60,
            },
        ];
        let back = parse_metrics_csv(&metrics_csv(&rows)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].set, "l1");
        assert!((back[0].excess_kurtosis - 1760.5).abs() < 1e-6);
        assert!(parse_metrics_csv("a,b\n").is_err());
        assert!(parse_metrics_csv("set,mse,excess_kurtosis,rank\nx,1\n").is_err());
    }

    #[test]
    fn tiling() {
        let a = Array2::from_elem((2, 3), 1.0);
        let b = Array2::from_elem((4, 1), 2.0);
        let r = tile_row(&[a.clone(), b.clone()], 2);
        assert_eq!(r.dim(), (4, 6));
        assert_eq!(r[[0, 5]], 2.0);
        assert_eq!(r[[3, 0]], 1.0);
        let c = tile_column(&[a, b], 1);
        assert_eq!(c.dim(), (7, 3));
        assert_eq!(c[[3, 0]], 2.0);
    }
}
