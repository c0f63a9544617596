use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use plotters::prelude::*;
use skewheat::experiments::{collect_records, run_all, run_file, Overrides, ResultRecord};

#[derive(Parser, Debug)]
#[command(name = "skewheat", version, about = "Batch experiments for the stochastic heat equation with distributional drift")]
struct Cli {
    /// Output root for result directories.
    #[arg(long, global = true, env = "SKEWHEAT_OUT", default_value = "results")]
    outdir: PathBuf,
    /// Worker threads for replica-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct RunFlags {
    /// Overrides the master seed of every config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the replica count of every config.
    #[arg(long)]
    replicas: Option<usize>,
}

impl From<RunFlags> for Overrides {
    fn from(f: RunFlags) -> Self {
        Overrides { seed: f.seed, replicas: f.replicas }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run every config listed in a manifest.
    RunAll {
        manifest: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Summarize the result records below a directory (default: --outdir).
    Report { dir: Option<PathBuf> },
    /// Render SVG plots from the CSV tables below a directory (default: --outdir).
    Plot { dir: Option<PathBuf> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Run { config, flags } => {
            let rec = run_file(&config, &cli.outdir, flags.into())?;
            print_record(&rec);
            Ok(u8::from(rec.theory_failure()))
        }
        Command::RunAll { manifest, flags } => {
            let summary = run_all(&manifest, &cli.outdir, flags.into())?;
            for rec in &summary.records {
                print_record(rec);
            }
            println!("{} experiments, exit code {}", summary.records.len(), summary.exit_code);
            Ok(summary.exit_code as u8)
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or(cli.outdir);
            let records = collect_records(&dir).with_context(|| format!("reading results under {}", dir.display()))?;
            if records.is_empty() {
                bail!("no result records under {}", dir.display());
            }
            for rec in &records {
                print_record(rec);
            }
            Ok(u8::from(records.iter().any(ResultRecord::theory_failure)))
        }
        Command::Plot { dir } => {
            let dir = dir.unwrap_or(cli.outdir);
            let written = plot_tree(&dir)?;
            for p in &written {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}

fn print_record(rec: &ResultRecord) {
    println!(
        "{} [{}] verdict={} replicas={} seed={} wall={:.1}s",
        rec.experiment,
        &rec.config_hash[..16],
        serde_json::to_value(rec.verdict).map(|v| v.as_str().unwrap_or("?").to_string()).unwrap_or_default(),
        rec.replicas,
        rec.seed,
        rec.wall_time_s
    );
    for c in &rec.checks {
        let verdict = serde_json::to_value(c.verdict).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let anchor = serde_json::to_value(c.anchor).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let value = c.value.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
        println!("  {verdict:<12} {anchor:<8} {:<48} value={value}  ({})", c.name, c.rule);
    }
}

/// Plots every `fit_*.csv` (log-log with least-squares line) and `ladder.csv`
/// (median distance per rung) found below `root`.
fn plot_tree(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
            if path.extension().is_some_and(|e| e == "csv") {
                let svg = path.with_extension("svg");
                if stem.starts_with("fit_") {
                    plot_fit(&path, &svg, &stem)?;
                    out.push(svg);
                } else if stem == "ladder" {
                    plot_ladder(&path, &svg)?;
                    out.push(svg);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(str::to_string).collect())).collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header.iter().position(|h| h == name).with_context(|| format!("{}: missing column {name}", path.display()))
}

fn parse(cell: &str, path: &Path) -> Result<f64> {
    cell.parse().with_context(|| format!("{}: bad number {cell:?}", path.display()))
}

fn log_range(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = v.clone().fold(f64::INFINITY, f64::min);
    let hi = v.fold(f64::NEG_INFINITY, f64::max);
    (lo / 1.5, hi * 1.5)
}

fn plot_fit(csv_path: &Path, svg: &Path, title: &str) -> Result<()> {
    let (header, rows) = read_csv(csv_path)?;
    let (si, vi) = (column(&header, "scale", csv_path)?, column(&header, "value", csv_path)?);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| Ok((parse(&r[si], csv_path)?, parse(&r[vi], csv_path)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .collect();
    if pts.len() < 2 {
        bail!("{}: fewer than two positive points", csv_path.display());
    }
    // least-squares line in log-log coordinates, recomputed from the CSV
    let n = pts.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let icept = my - slope * mx;
    let xr = log_range(pts.iter().map(|p| p.0));
    let yr = log_range(pts.iter().map(|p| p.1));
    let root = SVGBackend::new(svg, (640, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{title}: slope {slope:.3}"), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((xr.0..xr.1).log_scale(), (yr.0..yr.1).log_scale())?;
    chart.configure_mesh().x_desc("scale").y_desc("value").draw()?;
    chart.draw_series(pts.iter().map(|&p| Circle::new(p, 4, BLUE.filled())))?;
    chart.draw_series(LineSeries::new([xr.0, xr.1].map(|x| (x, (icept + slope * x.ln()).exp())), &RED))?;
    root.present()?;
    Ok(())
}

fn plot_ladder(csv_path: &Path, svg: &Path) -> Result<()> {
    let (header, rows) = read_csv(csv_path)?;
    let (ci, ni, mi) =
        (column(&header, "case", csv_path)?, column(&header, "n", csv_path)?, column(&header, "median_distance", csv_path)?);
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in &rows {
        let (n, m) = (parse(&r[ni], csv_path)?, parse(&r[mi], csv_path)?);
        if m <= 0.0 {
            continue;
        }
        match series.iter_mut().find(|(c, _)| *c == r[ci]) {
            Some((_, v)) => v.push((n, m)),
            None => series.push((r[ci].clone(), vec![(n, m)])),
        }
    }
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let root = SVGBackend::new(svg, (640, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    if all.is_empty() {
        root.present()?;
        return Ok(());
    }
    let xr = log_range(all.iter().map(|p| p.0));
    let yr = log_range(all.iter().map(|p| p.1));
    let mut chart = ChartBuilder::on(&root)
        .caption("mollification ladder: median sup-distance", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((xr.0..xr.1).log_scale(), (yr.0..yr.1).log_scale())?;
    chart.configure_mesh().x_desc("n (ε = 1/n)").y_desc("median D_n").draw()?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}
