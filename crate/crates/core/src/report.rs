//! Plain-text renderings of optimizer output: the per-iteration trace CSV and
//! the number format shared by every emitted file.

use std::fmt::Write;

use crate::optimizer::AlgorithmRun;

/// Decimal rendering with at most 12 significant digits.
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if (1e-6..1e15).contains(&rounded.abs()) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

pub fn trace_header(n_players: usize) -> String {
    let mut cols = vec!["run_id".to_string(), "iteration".into(), "team_mean".into(), "team_variance".into()];
    for prefix in ["pseudo_variance", "variance", "mean"] {
        cols.extend((1..=n_players).map(|i| format!("{prefix}_{i}")));
    }
    cols.push("decisions_changed".into());
    cols.join(",")
}

/// Trace CSV for a set of runs keyed by run id, one row per iteration.
pub fn trace_csv<'a>(n_players: usize, runs: impl IntoIterator<Item = (usize, &'a AlgorithmRun)>) -> String {
    let mut out = trace_header(n_players);
    out.push('\n');
    for (run_id, run) in runs {
        for rec in &run.records {
            let _ = write!(out, "{run_id},{},{},{}", rec.iteration, fmt_sig12(rec.team_mean), fmt_sig12(rec.team_variance));
            for v in rec.pseudo_variance.iter().chain(&rec.variance).chain(&rec.mean) {
                let _ = write!(out, ",{}", fmt_sig12(*v));
            }
            let _ = writeln!(out, ",{}", rec.decisions_changed);
        }
    }
    out
}
