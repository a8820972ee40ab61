//! The four subcommands: average, verify, selftest and the multi-guess
//! sweep probe. Each builds a text report and optional output files; exit
//! codes are a total function of the report content.

use crate::config::{RunConfig, VERIFY_TOLERANCE};
use nalgebra::DVector;
use orbit_averager_core::{
    averaged_map, chart_distance, epsilon_sweep, find_fixed_point, section_guess, selftest,
    AveragedMap, ChartPoint, RootResult, ScenarioId, SectionSpec, SweepTable,
};
use rand_like::SmallRng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;
pub const EXIT_OUT_OF_REGION: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 4;
pub const EXIT_SELFTEST_FAILED: i32 = 5;

/// Slope band accepted as first-order convergence.
const SLOPE_BAND: (f64, f64) = (0.8, 1.2);

/// Outcome of a subcommand: report text, exit code, files to write.
pub struct CommandOutput {
    pub report: String,
    pub exit_code: i32,
    pub files: Vec<(String, String)>,
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn push_config_warnings(out: &mut String, config: &RunConfig) {
    for w in &config.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
}

fn describe_map(out: &mut String, config: &RunConfig, map: &AveragedMap, root: &RootResult) {
    let s = &config.scenario;
    let k = map.k();
    out.push_str(&format!(
        "scenario {} (dim {}, projection k = {})\n",
        s.id(),
        s.dim(),
        k
    ));
    out.push_str(&format!(
        "averaged map F(alpha) = K alpha + h   (natural scale {})\n",
        fmt(map.scale())
    ));
    for i in 0..k {
        let row: Vec<String> = (0..k).map(|j| fmt(map.matrix()[(i, j)])).collect();
        out.push_str(&format!("K[{i}] = [{}]\n", row.join(", ")));
    }
    let h: Vec<String> = (0..k).map(|i| fmt(map.offset()[i])).collect();
    out.push_str(&format!("h = [{}]\n", h.join(", ")));
    out.push_str(&format!("det K = {}\n", fmt(root.det)));
    if s.id() == ScenarioId::S3 {
        if let Ok((rotation, sphere)) = map.diagonal_block_determinants(2) {
            out.push_str(&format!(
                "block determinants: rotation {} sphere {}\n",
                fmt(rotation),
                fmt(sphere)
            ));
        }
    }
    match &root.alpha {
        Some(alpha) => {
            let names: Vec<&str> = s.coordinate_names().iter().take(k).copied().collect();
            let pairs: Vec<String> = names
                .iter()
                .zip(alpha.iter())
                .map(|(n, v)| format!("{n}0 = {}", fmt(*v)))
                .collect();
            out.push_str(&format!("root alpha* : {}\n", pairs.join(", ")));
            out.push_str(&format!(
                "region: delta0 = {}, kappa = {} -> root in region: {}\n",
                fmt(config.root_region.delta0()),
                fmt(config.root_region.kappa()),
                root.in_region
            ));
        }
        None => out.push_str("root: none (degenerate averaged map)\n"),
    }
}

/// Computes the averaged map, solves it and reports the root.
pub fn cmd_average(config: &RunConfig) -> CommandOutput {
    let mut out = String::new();
    push_config_warnings(&mut out, config);
    let map = match averaged_map(&config.scenario, &config.perturbation) {
        Ok(map) => map,
        Err(e) => {
            return CommandOutput {
                report: format!("error: {e}\n"),
                exit_code: EXIT_CONFIG,
                files: Vec::new(),
            }
        }
    };
    let root = map.solve_root(&config.root_region);
    describe_map(&mut out, config, &map, &root);
    let exit_code = if root.degenerate {
        out.push_str("status: degenerate (no isolated root)\n");
        EXIT_DEGENERATE
    } else if !root.in_region {
        out.push_str("status: root outside the region; no verification attempted\n");
        EXIT_OUT_OF_REGION
    } else {
        out.push_str("status: ok\n");
        EXIT_OK
    };
    CommandOutput {
        report: out,
        exit_code,
        files: vec![("report.txt".into(), String::new())],
    }
}

fn describe_sweep(out: &mut String, config: &RunConfig, section: &SectionSpec, table: &SweepTable) {
    let names = section.coordinate_names(&config.scenario).join(", ");
    out.push_str(&format!(
        "section: {}[{}] = {} (positive crossings), coordinates ({names})\n",
        config.scenario.coordinate_names()[section.azimuth_index()],
        section.azimuth_index(),
        fmt(section.value()),
    ));
    for row in &table.rows {
        match &row.outcome {
            Ok(cert) => {
                let mults: Vec<String> = cert
                    .multipliers
                    .iter()
                    .map(|m| format!("{}{:+}i", fmt(m.re), m.im))
                    .collect();
                out.push_str(&format!(
                    "eps {}: certified, residual {}, period {}, distance {}, multipliers [{}]{}{}\n",
                    fmt(row.epsilon),
                    fmt(cert.residual),
                    fmt(cert.period),
                    fmt(cert.distance),
                    mults.join(", "),
                    if cert.isolated { "" } else { " (non-hyperbolic)" },
                    match cert.radial_deviation {
                        Some(d) => format!(", |r-1| <= {}", fmt(d)),
                        None => String::new(),
                    },
                ));
            }
            Err(e) => {
                out.push_str(&format!("eps {}: {} ({e})\n", fmt(row.epsilon), row.status()));
            }
        }
    }
    match table.slope {
        Some(slope) => out.push_str(&format!("log-log slope of distance vs eps: {}\n", fmt(slope))),
        None => out.push_str("log-log slope of distance vs eps: not available\n"),
    }
}

/// Averages, solves, then confirms the prediction by an epsilon sweep and
/// writes the sweep CSV.
pub fn cmd_verify(config: &RunConfig, jobs: usize) -> CommandOutput {
    let average = cmd_average(config);
    if average.exit_code != EXIT_OK {
        return average;
    }
    let mut out = average.report;

    let map = averaged_map(&config.scenario, &config.perturbation).expect("validated above");
    let root = map.solve_root(&config.root_region);
    let alpha = root.alpha.expect("non-degenerate above");
    let prediction = config
        .scenario
        .periodic_orbit_start(alpha.as_slice())
        .expect("projection fits scenario");
    let section = SectionSpec::for_scenario(&config.scenario);
    let table = match epsilon_sweep(
        &config.scenario,
        &config.perturbation,
        &section,
        &prediction,
        &config.epsilons,
        VERIFY_TOLERANCE,
        &config.verify_options(),
        jobs,
    ) {
        Ok(table) => table,
        Err(e) => {
            out.push_str(&format!("error: {e}\n"));
            return CommandOutput {
                report: out,
                exit_code: EXIT_CONFIG,
                files: Vec::new(),
            };
        }
    };
    describe_sweep(&mut out, config, &section, &table);

    let slope_ok = table
        .slope
        .is_some_and(|s| s >= SLOPE_BAND.0 && s <= SLOPE_BAND.1);
    let exit_code = if table.all_certified() && slope_ok {
        out.push_str("status: verified\n");
        EXIT_OK
    } else {
        if !table.all_certified() {
            let failed: Vec<String> = table
                .rows
                .iter()
                .filter(|r| r.outcome.is_err())
                .map(|r| format!("{}", r.epsilon))
                .collect();
            out.push_str(&format!(
                "status: verification failed (rows: {})\n",
                failed.join(", ")
            ));
        } else {
            out.push_str(&format!(
                "status: verification failed (slope {} outside [{}, {}])\n",
                table.slope.map(fmt).unwrap_or_else(|| "n/a".into()),
                SLOPE_BAND.0,
                SLOPE_BAND.1
            ));
        }
        EXIT_VERIFY_FAILED
    };
    let csv = table.to_csv(&config.scenario, &section);
    CommandOutput {
        report: out,
        exit_code,
        files: vec![
            ("report.txt".into(), String::new()),
            ("sweep.csv".into(), csv),
        ],
    }
}

/// Runs the seeded property suites; `fault` deliberately corrupts one
/// component as a negative control.
pub fn cmd_selftest(config: &RunConfig, fault: Option<selftest::Fault>) -> CommandOutput {
    let mut out = String::new();
    push_config_warnings(&mut out, config);
    out.push_str(&format!("selftest seed {}\n", config.seed));
    if fault.is_some() {
        out.push_str("fault injection: integrand-table\n");
    }
    let mut all_ok = true;
    for report in selftest::run_all(config.seed, fault) {
        if report.passed() {
            out.push_str(&format!("suite {}: pass ({} cases)\n", report.name, report.cases));
        } else {
            all_ok = false;
            out.push_str(&format!(
                "suite {}: FAIL ({} of {} cases, seed {})\n",
                report.name,
                report.failures.len(),
                report.cases,
                config.seed
            ));
            for failure in report.failures.iter().take(5) {
                out.push_str(&format!("  {failure}\n"));
            }
        }
    }
    let exit_code = if all_ok {
        out.push_str("status: ok\n");
        EXIT_OK
    } else {
        out.push_str("status: selftest failed\n");
        EXIT_SELFTEST_FAILED
    };
    CommandOutput {
        report: out,
        exit_code,
        files: vec![("report.txt".into(), String::new())],
    }
}

/// Empirical probe of cycle multiplicity: verification is attempted from a
/// grid of section guesses around the prediction and the distinct certified
/// cycles are counted per epsilon. Runs sequentially; the grid is small and
/// deduplication wants deterministic order.
pub fn cmd_sweep(config: &RunConfig, _jobs: usize) -> CommandOutput {
    let mut out = String::new();
    push_config_warnings(&mut out, config);

    let map = match averaged_map(&config.scenario, &config.perturbation) {
        Ok(map) => map,
        Err(e) => {
            return CommandOutput {
                report: format!("error: {e}\n"),
                exit_code: EXIT_CONFIG,
                files: Vec::new(),
            }
        }
    };
    let root = map.solve_root(&config.root_region);
    let section = SectionSpec::for_scenario(&config.scenario);
    let base = match &root.alpha {
        Some(alpha) => {
            let prediction = config
                .scenario
                .periodic_orbit_start(alpha.as_slice())
                .expect("projection fits scenario");
            section_guess(&config.scenario, &section, &prediction).expect("spec matches")
        }
        None => {
            out.push_str("no averaged root; probing around the isochronous base point\n");
            let alpha = vec![0.0; config.scenario.projection_dim()];
            let prediction = config
                .scenario
                .periodic_orbit_start(&alpha)
                .expect("projection fits scenario");
            section_guess(&config.scenario, &section, &prediction).expect("spec matches")
        }
    };

    let mut rng = SmallRng::new(config.seed);
    let guesses: Vec<DVector<f64>> = (0..8)
        .map(|i| {
            if i == 0 {
                base.clone()
            } else {
                DVector::from_fn(base.len(), |j, _| base[j] + 0.2 * (rng.next_unit() - 0.5))
            }
        })
        .collect();

    let mut csv = String::from("eps,guess,status,distinct_cycle\n");
    let options = config.verify_options();
    for &eps in &config.epsilons {
        let mut found: Vec<ChartPoint> = Vec::new();
        let mut statuses = Vec::new();
        for (g, guess) in guesses.iter().enumerate() {
            let outcome = find_fixed_point(
                &config.scenario,
                &config.perturbation,
                eps,
                &section,
                guess,
                VERIFY_TOLERANCE,
                &options,
            );
            let (status, cycle_id) = match outcome {
                Ok(cert) => {
                    let id = found
                        .iter()
                        .position(|p| chart_distance(p, &cert.state).unwrap_or(f64::MAX) < 1e-4);
                    let id = match id {
                        Some(id) => id,
                        None => {
                            found.push(cert.state.clone());
                            found.len() - 1
                        }
                    };
                    ("certified", format!("{id}"))
                }
                Err(e) => {
                    statuses.push(format!("guess {g}: {e}"));
                    ("failed", String::new())
                }
            };
            csv.push_str(&format!("{:.16e},{g},{status},{cycle_id}\n", eps));
        }
        out.push_str(&format!(
            "eps {}: {} distinct certified cycle(s) from {} guesses\n",
            fmt(eps),
            found.len(),
            guesses.len()
        ));
    }
    out.push_str("status: probe complete\n");
    CommandOutput {
        report: out,
        exit_code: EXIT_OK,
        files: vec![
            ("report.txt".into(), String::new()),
            ("probe.csv".into(), csv),
        ],
    }
}

/// Tiny deterministic generator for probe guess offsets; avoids hauling the
/// full RNG stack into the CLI.
mod rand_like {
    pub struct SmallRng(u64);

    impl SmallRng {
        pub fn new(seed: u64) -> Self {
            Self(seed.wrapping_add(0x9e3779b97f4a7c15))
        }

        /// splitmix64 step mapped to [0, 1).
        pub fn next_unit(&mut self) -> f64 {
            self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z = z ^ (z >> 31);
            (z >> 11) as f64 / (1u64 << 53) as f64
        }
    }
}
