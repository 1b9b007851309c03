//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use allocscore::alloc::expected_loss_of_amounts;
use allocscore::{
    allocation_score, integrated_allocation_score, mc_propriety, posthoc_impropriety_demo, solve_allocation, Forecast,
    Level, LossParams, Marginal, Outcome, Quantiles, SolverConfig, TailFamily, Verdict, WeightKind, WeightSpec,
    HUB_LEVELS,
};
use allocscore_hubio::{read_report, Format};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome64 = Outcome<f64>;

struct Verdicts {
    failed: usize,
}

impl Verdicts {
    fn record(&mut self, id: u32, title: &str, result: Result<String, String>) {
        match result {
            Ok(detail) => println!("criterion {id:>2} PASS  {title}: {detail}"),
            Err(detail) => {
                self.failed += 1;
                println!("criterion {id:>2} FAIL  {title}: {detail}");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn exp_forecast(scales: &[f64]) -> Forecast {
    Forecast::unlabeled(scales.iter().map(|&s| Marginal::exponential(s).unwrap()).collect()).unwrap()
}

fn cfg() -> SolverConfig<f64> {
    SolverConfig::default()
}

fn unit() -> LossParams<f64> {
    LossParams::default()
}

fn pair_allocations() -> Result<String, String> {
    let f = exp_forecast(&[1.0, 4.0]);
    let mut worst = 0.0f64;
    for (k, want) in [(5.0, [1.0, 4.0]), (10.0, [2.0, 8.0])] {
        let x = solve_allocation(&f, k, &cfg()).map_err(|e| e.to_string())?;
        for (a, b) in x.amounts().iter().zip(want) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("max error {worst:e}"))?;

    let reps = 2_000;
    let mut slowest = 0.0f64;
    for k in [5.0, 10.0] {
        let t = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(solve_allocation(&f, std::hint::black_box(k), &cfg()).unwrap());
        }
        slowest = slowest.max(t.elapsed().as_secs_f64() / reps as f64);
    }
    ensure(slowest < 1e-3, || format!("{:.1} us per solve", slowest * 1e6))?;
    Ok(format!("max error {worst:.1e}, {:.1} us per solve", slowest * 1e6))
}

fn pair_scores() -> Result<String, String> {
    let f = exp_forecast(&[1.0, 4.0]);
    let y = Outcome64::new(vec![1.0, 10.0]).unwrap();
    let s5 = allocation_score(&f, &y, 5.0, unit(), &cfg()).unwrap().allocation_score;
    let s10 = allocation_score(&f, &y, 10.0, unit(), &cfg()).unwrap().allocation_score;
    ensure(s5.abs() <= 1e-9 && (s10 - 1.0).abs() <= 1e-9, || format!("AS(5) = {s5}, AS(10) = {s10}"))?;
    Ok(format!("AS(5) = {s5}, AS(10) = {s10}"))
}

fn scale_equivalence() -> Result<String, String> {
    let (a, b) = (exp_forecast(&[1.0, 4.0]), exp_forecast(&[2.0, 8.0]));
    let y = Outcome64::new(vec![1.0, 10.0]).unwrap();
    let mut worst = 0.0f64;
    for k in [0.5, 2.0, 5.0, 10.0, 25.0, 100.0] {
        let (ra, rb) = (
            allocation_score(&a, &y, k, unit(), &cfg()).unwrap(),
            allocation_score(&b, &y, k, unit(), &cfg()).unwrap(),
        );
        worst = worst.max((ra.allocation_score - rb.allocation_score).abs());
        for (p, q) in ra.per_location.iter().zip(&rb.per_location) {
            worst = worst.max((p.allocated - q.allocated).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max difference {worst:e}"))?;
    Ok(format!("max difference {worst:.1e} over 6 K values"))
}

fn random_quantile_set(rng: &mut ChaCha8Rng) -> Quantiles {
    let n = rng.gen_range(3..=9);
    let mut levels: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut v = rng.gen_range(0.0..20.0);
    let values = levels
        .iter()
        .map(|_| {
            // Repeated values produce point masses.
            if rng.gen_bool(0.7) {
                v += rng.gen_range(0.0..15.0);
            }
            v
        })
        .collect();
    Quantiles::new(levels, values).unwrap()
}

fn random_marginal(rng: &mut ChaCha8Rng, kind: usize) -> Marginal {
    match kind {
        0 => Marginal::exponential(rng.gen_range(0.1..50.0)).unwrap(),
        1 => Marginal::normal(rng.gen_range(-5.0..60.0), rng.gen_range(0.5..20.0)).unwrap(),
        2 => Marginal::lognormal(rng.gen_range(-1.0..3.5), rng.gen_range(0.1..1.5)).unwrap(),
        _ => Marginal::from_quantiles(&random_quantile_set(rng), TailFamily::Normal).unwrap(),
    }
}

fn oracle_bound() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut kinds = [0usize; 4];
    let mut min_as = f64::INFINITY;
    let mut bounded = 0;
    for case in 0..1_000 {
        let n = rng.gen_range(1..=6);
        let marginals: Vec<Marginal> = (0..n)
            .map(|_| {
                let kind = rng.gen_range(0..4);
                kinds[kind] += 1;
                random_marginal(&mut rng, kind)
            })
            .collect();
        let f = Forecast::unlabeled(marginals).unwrap();
        let y = Outcome64::new((0..n).map(|_| rng.gen_range(0.0..100.0)).collect()).unwrap();
        // K must stay below the combined support when every marginal is bounded.
        let sup: Option<f64> = f.marginals().iter().map(|d| d.quantile(Level::new(1.0).unwrap()).ok()).sum();
        let k = match sup {
            Some(s) => rng.gen_range(0.0..1.0) * s + 1e-3,
            None => rng.gen_range(0.5..200.0),
        };
        bounded += usize::from(sup.is_some());
        let loss = LossParams::new(rng.gen_range(0.1..5.0)).unwrap();
        let r = allocation_score(&f, &y, k, loss, &cfg()).map_err(|e| format!("case {case}: {e}"))?;
        ensure(r.allocation_score >= 0.0 && r.raw_score >= r.oracle_loss, || {
            format!("case {case}: raw {} oracle {} AS {}", r.raw_score, r.oracle_loss, r.allocation_score)
        })?;
        min_as = min_as.min(r.allocation_score);
    }
    Ok(format!(
        "1000 instances ({bounded} with bounded support), marginals exp/normal/lognormal/reconstructed = {kinds:?}, min AS {min_as}"
    ))
}

fn brute_force() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_excess = f64::NEG_INFINITY;
    for case in 0..100 {
        let marginals = (0..2)
            .map(|_| {
                let kind = rng.gen_range(0..3);
                random_marginal(&mut rng, kind)
            })
            .collect();
        let f = Forecast::unlabeled(marginals).unwrap();
        let k = rng.gen_range(0.5..150.0);
        let loss = LossParams::new(rng.gen_range(0.1..5.0)).unwrap();
        let x = solve_allocation(&f, k, &cfg()).map_err(|e| format!("case {case}: {e}"))?;
        let solver = expected_loss_of_amounts(&f, x.amounts(), loss).unwrap();
        let grid_min = (0..=10_000)
            .map(|i| {
                let a = k * i as f64 / 10_000.0;
                expected_loss_of_amounts(&f, &[a, k - a], loss).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        let slack = 1e-4 * loss.per_unit_loss() * k;
        ensure(solver <= grid_min + slack, || format!("case {case}: solver {solver} grid {grid_min}"))?;
        worst_excess = worst_excess.max((solver - grid_min) / slack);
    }
    Ok(format!("100 instances, largest (solver - grid) / slack = {worst_excess:.3e}"))
}

fn propriety() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut margins = Vec::new();
    for case in 0..20 {
        let n = rng.gen_range(2..=4);
        let f = exp_forecast(&(0..n).map(|_| rng.gen_range(0.2..20.0)).collect::<Vec<_>>());
        let g = exp_forecast(&(0..n).map(|_| rng.gen_range(0.2..20.0)).collect::<Vec<_>>());
        let k = rng.gen_range(1.0..60.0);
        let seed = rng.gen();
        let r = mc_propriety(&f, &g, k, 10_000, seed, unit(), &cfg()).map_err(|e| e.to_string())?;
        ensure(r.verdict == Verdict::Consistent, || format!("case {case}: {r:?}"))?;
        let s = mc_propriety(&f, &f, k, 10_000, seed, unit(), &cfg()).map_err(|e| e.to_string())?;
        ensure(s.mean_self == s.mean_other, || format!("case {case}: self gap {}", s.mean_self - s.mean_other))?;
        margins.push((r.mean_other - r.mean_self) / r.se.max(f64::MIN_POSITIVE));
    }
    let least = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("20/20 consistent, self gaps exactly 0, smallest (other - self) / se = {least:.2}"))
}

fn round_trip() -> Result<String, String> {
    let sources = [
        Marginal::exponential(1.0).unwrap(),
        Marginal::exponential(250.0).unwrap(),
        Marginal::lognormal(0.0, 1.0).unwrap(),
        Marginal::lognormal(5.0, 0.4).unwrap(),
        Marginal::lognormal(-1.0, 2.0).unwrap(),
    ];
    let mut worst = 0.0f64;
    for (i, d) in sources.iter().enumerate() {
        let q = Quantiles::from_distribution(d, &HUB_LEVELS).unwrap();
        let g = Marginal::from_quantiles(&q, TailFamily::Normal).unwrap();
        for (&u, &v) in q.levels().iter().zip(q.values()) {
            let back = g.quantile(Level::new(u).unwrap()).unwrap();
            worst = worst.max((back - v).abs() / v.abs());
        }
        let lo = g.quantile(Level::new(1e-4).unwrap()).unwrap();
        let hi = g.quantile(Level::new(1.0 - 1e-4).unwrap()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for j in 0..10_000 {
            let x = lo + (hi - lo) * j as f64 / 9_999.0;
            let c = g.cdf(x);
            ensure((0.0..=1.0).contains(&c) && c >= prev, || format!("source {i}: CDF drops at {x}"))?;
            prev = c;
        }
    }
    ensure(worst <= 1e-9, || format!("max relative error {worst:e}"))?;
    Ok(format!("5 sources, max relative error {worst:.1e}, CDF monotone on 10000 points"))
}

fn integrated() -> Result<String, String> {
    let f = exp_forecast(&[1.0, 4.0]);
    let y = Outcome64::new(vec![1.0, 10.0]).unwrap();
    for k in [5.0, 7.5, 10.0, 15_000.0] {
        let point = WeightSpec::new(WeightKind::PointMass { k }, 1.0).unwrap();
        let ias = integrated_allocation_score(&f, &y, &point, unit(), &cfg()).unwrap();
        let as_ = allocation_score(&f, &y, k, unit(), &cfg()).unwrap().allocation_score;
        ensure(ias == as_, || format!("point mass at {k}: IAS {ias} vs AS {as_}"))?;
    }
    let uniform = WeightSpec::new(WeightKind::Uniform { k_min: 5.0, k_max: 10.0 }, 5.0).unwrap();
    let ias = integrated_allocation_score(&f, &y, &uniform, unit(), &cfg()).unwrap();
    ensure((ias - 0.5).abs() <= 1e-9, || format!("uniform IAS {ias}"))?;
    Ok(format!("point masses exact, uniform over {{5, 10}} = {ias}"))
}

fn impropriety() -> Result<String, String> {
    let f = Forecast::unlabeled(vec![Marginal::lognormal(0.0, 1.5).unwrap(), Marginal::lognormal(1.0, 0.5).unwrap()])
        .unwrap();
    let r = posthoc_impropriety_demo(&f, 80.0, 20_000, 9, unit(), &cfg()).map_err(|e| e.to_string())?;
    ensure(r.shared_level_true > 0.99 && r.level_in_extrapolated_tail, || format!("level {}", r.shared_level_true))?;
    ensure(r.max_allocation_gap > 0.0, || "allocations coincide".into())?;
    Ok(format!(
        "shared level {:.5} (rebuilt {:.5}), allocation gap {:.4}, expected score gap {:.3e} (Monte Carlo {:.1e}, se {:.1e})",
        r.shared_level_true, r.shared_level_reconstructed, r.max_allocation_gap, r.expected_score_gap, r.score_gap, r.se
    ))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_cli(args: &[&str]) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_allocscore")).args(args).output().map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn end_to_end(suite_start: Instant) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (fc, truth) = (fixture("forecasts.csv"), fixture("truth.csv"));
    let (fc, truth) = (path_str(&fc), path_str(&truth));

    for (k, want) in [("5", [1.0, 4.0]), ("10", [2.0, 8.0])] {
        let (code, out) = run_cli(&["allocate", "--forecasts", fc, "--k", k])?;
        ensure(code == 0, || format!("allocate exit {code}"))?;
        let text = String::from_utf8(out).unwrap();
        let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
        ensure(rows.len() == 4, || format!("{} allocation rows", rows.len()))?;
        for row in &rows {
            let got: f64 = row[4].parse().unwrap();
            let expect = if row[3] == "A" { want[0] } else { want[1] };
            ensure((got - expect).abs() <= 1e-6, || format!("{} at K={k}: {got} vs {expect}", row[0]))?;
        }
    }

    let run_sweep = |name: &str, format: &str| -> Result<(PathBuf, Vec<u8>), String> {
        let out = dir.path().join(name);
        let args = [
            "sweep",
            "--forecasts",
            fc,
            "--truth",
            truth,
            "--k-min",
            "5",
            "--k-max",
            "10",
            "--k-step",
            "5",
            "--format",
            format,
            "--out",
            path_str(&out),
        ];
        let (code, _) = run_cli(&args)?;
        ensure(code == 0, || format!("sweep exit {code}"))?;
        let bytes = std::fs::read(&out).map_err(|e| e.to_string())?;
        Ok((out, bytes))
    };
    for format in ["csv", "json"] {
        let (path, first) = run_sweep(&format!("a.{format}"), format)?;
        let (_, second) = run_sweep(&format!("b.{format}"), format)?;
        ensure(first == second, || format!("{format} reruns differ"))?;
        let reports = read_report(&path, format.parse::<Format>().unwrap()).map_err(|e| e.to_string())?;
        ensure(reports.len() == 4, || format!("{} sweep rows", reports.len()))?;
        for r in &reports {
            let expect = if r.k == 5.0 { 0.0 } else { 1.0 };
            ensure((r.allocation_score - expect).abs() <= 1e-9, || {
                format!("{} at K={}: AS {}", r.model, r.k, r.allocation_score)
            })?;
        }
    }

    let crossed = dir.path().join("crossed.csv");
    std::fs::write(
        &crossed,
        "model,location,target_date,quantile_level,value\nm,A,2024-01-06,0.25,2\nm,A,2024-01-06,0.75,1\n",
    )
    .unwrap();
    let (code, _) = run_cli(&["allocate", "--forecasts", path_str(&crossed), "--k", "5"])?;
    ensure(code == 2, || format!("crossed quantiles exit {code}"))?;

    let elapsed = suite_start.elapsed().as_secs_f64();
    ensure(elapsed < 60.0, || format!("suite took {elapsed:.1} s"))?;
    Ok(format!(
        "allocations (1,4)/(2,8), AS 0/1 for both scalings via CSV and JSON, byte-identical reruns, suite {elapsed:.1} s"
    ))
}

fn main() {
    let start = Instant::now();
    let mut v = Verdicts { failed: 0 };
    v.record(1, "two-exponential allocations", pair_allocations());
    v.record(2, "two-exponential scores", pair_scores());
    v.record(3, "scale equivalence", scale_equivalence());
    v.record(4, "oracle bound", oracle_bound());
    v.record(5, "brute-force optimality", brute_force());
    v.record(6, "propriety Monte Carlo", propriety());
    v.record(7, "quantile reconstruction round trip", round_trip());
    v.record(8, "integrated score degenerate cases", integrated());
    v.record(9, "post hoc impropriety", impropriety());
    v.record(10, "end-to-end CLI", end_to_end(start));
    println!("acceptance: {} of 10 criteria passed", 10 - v.failed);
    if v.failed > 0 {
        std::process::exit(1);
    }
}
