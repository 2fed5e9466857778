//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::Duration as Hours;
use common::{http, run, spawn_server, stderr, stdout};
use perfdrift_core::edivisive::{best_split, detect_values, divergence, Segment};
use perfdrift_core::report::{emit_svg, make_plot_spec};
use perfdrift_core::simulate::{epoch, simulate, simulate_values, synthetic_commit, SimSpec};
use perfdrift_core::stats::{paired_t_test, shapiro_wilk, SampleVector};
use perfdrift_core::store::{store_append, store_load, StoreLayout};
use perfdrift_core::{DetectionConfig, MeasurementPoint, SeriesKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

/// Energy divergence written out pair by pair, independent of the library.
fn oracle_divergence(x: &[f64], y: &[f64], alpha: f64) -> f64 {
    let d = |a: f64, b: f64| (a - b).abs().powf(alpha);
    let (m, n) = (x.len() as f64, y.len() as f64);
    let between: f64 = x
        .iter()
        .flat_map(|&a| y.iter().map(move |&b| d(a, b)))
        .sum();
    let within = |v: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..v.len() {
            for k in i + 1..v.len() {
                s += d(v[i], v[k]);
            }
        }
        s
    };
    let e = 2.0 * between / (m * n)
        - within(x) * 2.0 / (m * (m - 1.0))
        - within(y) * 2.0 / (n * (n - 1.0));
    m * n / (m + n) * e
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(4..=100);
        let alpha = [0.5, 1.0, 1.5][case % 3];
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5000.0)).collect();
        let mut best = (0, f64::NEG_INFINITY);
        for tau in 2..=n - 2 {
            let want = oracle_divergence(&values[..tau], &values[tau..], alpha);
            let got =
                divergence(&values[..tau], &values[tau..], alpha).map_err(|e| e.to_string())?;
            let err = (got - want).abs() / want.abs().max(1.0);
            worst = worst.max(err);
            ensure(err <= 1e-9, || {
                format!("case {case} tau {tau}: {got} vs {want}")
            })?;
            if want > best.1 {
                best = (tau, want);
            }
        }
        let config = DetectionConfig {
            alpha,
            min_segment: 2,
            ..DetectionConfig::default()
        };
        let cand = best_split(&values, Segment::new(0, n), &config).ok_or("no split")?;
        let err = (cand.qhat - best.1).abs() / best.1.abs().max(1.0);
        worst = worst.max(err);
        ensure(err <= 1e-9, || {
            format!("case {case}: best qhat {} vs {}", cand.qhat, best.1)
        })?;
        let at = oracle_divergence(&values[..cand.tau], &values[cand.tau..], alpha);
        ensure((at - best.1).abs() / best.1.abs().max(1.0) <= 1e-9, || {
            format!("case {case}: tau {} is not a maximizer", cand.tau)
        })?;
    }
    within_time(start, Duration::from_secs(10))?;
    Ok(format!(
        "100 instances, max relative error {worst:.1e}, {:.2?}",
        start.elapsed()
    ))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let d = DetectionConfig::default();
    ensure(d.p_threshold == 0.001 && d.permutations == 999, || {
        format!("defaults {d:?}")
    })?;
    let values: Vec<f64> = (0..40)
        .map(|i| if i < 20 { 100.0 } else { 200.0 })
        .collect();
    let found = detect_values(&values, &d).map_err(|e| e.to_string())?;
    ensure(found.len() == 1, || {
        format!("expected one change, got {found:?}")
    })?;
    ensure(found[0].index == 20 && found[0].p_value == 0.001, || {
        format!("{:?}", found[0])
    })?;
    let bad = DetectionConfig {
        permutations: 100,
        ..d
    };
    ensure(bad.validate().is_err(), || {
        "permutations=100 accepted".into()
    })?;
    within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "one change at 20, p = {}; R=100 rejected",
        found[0].p_value
    ))
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let step = |after: f64| -> Vec<f64> {
        (0..60)
            .map(|i| if i < 30 { 1000.0 } else { after })
            .collect()
    };
    let d = DetectionConfig::default();
    let small = detect_values(&step(1040.0), &d).map_err(|e| e.to_string())?;
    ensure(small.is_empty(), || format!("4% step reported: {small:?}"))?;
    let big = detect_values(&step(1060.0), &d).map_err(|e| e.to_string())?;
    ensure(big.len() == 1, || format!("6% step: {big:?}"))?;
    let m = big[0].magnitude.ok_or("no magnitude")?;
    ensure((m - 0.060).abs() <= 1e-9, || format!("magnitude {m}"))?;
    within_time(start, Duration::from_secs(5))?;
    Ok(format!("+4% filtered, +6% reported with magnitude {m:.12}"))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let config = DetectionConfig {
        magnitude_threshold: 0.0,
        ..DetectionConfig::default()
    };
    let mut hits = 0;
    for seed in 0..200 {
        let values = simulate_values(&SimSpec::new(60, 1000.0).noise(0.05).seed(10_000 + seed))
            .map_err(|e| e.to_string())?;
        if !detect_values(&values, &config)
            .map_err(|e| e.to_string())?
            .is_empty()
        {
            hits += 1;
        }
    }
    ensure(hits <= 2, || {
        format!("{hits}/200 null series reported a change")
    })?;
    within_time(start, Duration::from_secs(120))?;
    Ok(format!(
        "{hits}/200 null series flagged, {:.2?}",
        start.elapsed()
    ))
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let (mut near, mut exactly_one) = (0, 0);
    for seed in 0..100 {
        let values = simulate_values(
            &SimSpec::new(60, 1000.0)
                .shift(30, 0.30)
                .noise(0.01)
                .seed(seed),
        )
        .map_err(|e| e.to_string())?;
        let found =
            detect_values(&values, &DetectionConfig::default()).map_err(|e| e.to_string())?;
        if found.iter().any(|c| c.index.abs_diff(30) <= 1) {
            near += 1;
        }
        if found.len() == 1 {
            exactly_one += 1;
        }
    }
    ensure(near >= 95 && exactly_one >= 90, || {
        format!("near {near}, exactly one {exactly_one}")
    })?;
    within_time(start, Duration::from_secs(120))?;
    Ok(format!(
        "within ±1: {near}/100, exactly one: {exactly_one}/100, {:.2?}",
        start.elapsed()
    ))
}

#[derive(Deserialize)]
struct ShapiroCase {
    name: String,
    data: Vec<f64>,
    w: f64,
    p: f64,
}

#[derive(Deserialize)]
struct PairedCase {
    name: String,
    x: Vec<f64>,
    y: Vec<f64>,
    p: f64,
}

#[derive(Deserialize)]
struct Fixtures {
    shapiro: Vec<ShapiroCase>,
    paired: Vec<PairedCase>,
}

fn criterion_6() -> Check {
    let fx: Fixtures = serde_json::from_str(include_str!(
        "../../core/tests/fixtures/stats_reference.json"
    ))
    .map_err(|e| e.to_string())?;
    ensure(fx.shapiro.len() == 20, || {
        format!("{} shapiro fixtures", fx.shapiro.len())
    })?;
    let (mut dw, mut dp) = (0.0f64, 0.0f64);
    for c in &fx.shapiro {
        let s = SampleVector::new(&c.name, c.data.clone()).map_err(|e| e.to_string())?;
        let r = shapiro_wilk(&s).map_err(|e| format!("{}: {e}", c.name))?;
        dw = dw.max((r.statistic - c.w).abs());
        dp = dp.max((r.p_value - c.p).abs());
        ensure(
            (r.statistic - c.w).abs() <= 1e-3 && (r.p_value - c.p).abs() <= 5e-3,
            || {
                format!(
                    "{}: ({}, {}) vs ({}, {})",
                    c.name, r.statistic, r.p_value, c.w, c.p
                )
            },
        )?;
    }
    // differences [1, 2, 3]: t = 2√3 on 2 df, two-sided p = 1 - t/√(t² + 2)
    let x = SampleVector::new("x", vec![2.0, 4.0, 6.0]).map_err(|e| e.to_string())?;
    let y = SampleVector::new("y", vec![1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    let r = paired_t_test(&x, &y).map_err(|e| e.to_string())?;
    let t = 2.0 * 3f64.sqrt();
    let closed = 1.0 - t / (t * t + 2.0).sqrt();
    ensure((r.p_value - closed).abs() <= 1e-6, || {
        format!("paired p {} vs {closed}", r.p_value)
    })?;
    ensure((r.p_value - 0.0742).abs() <= 1e-3, || {
        format!("paired p {}", r.p_value)
    })?;
    for c in &fx.paired {
        let x = SampleVector::new("x", c.x.clone()).map_err(|e| e.to_string())?;
        let y = SampleVector::new("y", c.y.clone()).map_err(|e| e.to_string())?;
        let r = paired_t_test(&x, &y).map_err(|e| e.to_string())?;
        ensure(c.x.len() == 30, || format!("{}: n = {}", c.name, c.x.len()))?;
        ensure((r.p_value - c.p).abs() <= 1e-6, || {
            format!("{}: {} vs {}", c.name, r.p_value, c.p)
        })?;
    }
    Ok(format!(
        "20 SW fixtures (max |Δw| {dw:.1e}, max |Δp| {dp:.1e}); paired p = {:.4}; {} n=30 fixtures",
        r.p_value,
        fx.paired.len()
    ))
}

fn criterion_7(dir: &Path) -> Check {
    let layout = StoreLayout::new(dir.join("clip-store"));
    let key = SeriesKey::parse("moobench/kieker-java-binary-file").map_err(|e| e.to_string())?;
    for (i, v) in [2400.0, 2500.0, 35624.0, 2450.0].into_iter().enumerate() {
        let p = MeasurementPoint::new(
            synthetic_commit(i),
            epoch() + Hours::hours(3 * i as i64),
            v,
            "ns",
        )
        .map_err(|e| e.to_string())?;
        store_append(&layout, &key, &p).map_err(|e| e.to_string())?;
    }
    let path = layout.path_for(&key);
    let before = fs::read(&path).map_err(|e| e.to_string())?;
    let series = store_load(&layout, &key).map_err(|e| e.to_string())?.series;
    let spec = make_plot_spec(&series, &[], Some(4500.0)).map_err(|e| e.to_string())?;
    let p = &spec.points[2];
    ensure(p.y == 4500.0 && p.clipped && p.original == 35624.0, || {
        format!("{p:?}")
    })?;
    ensure(
        spec.points.iter().filter(|p| p.clipped).count() == 1,
        || "extra clipped points".into(),
    )?;
    let svg = String::from_utf8(emit_svg(&spec).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure(svg.contains("actual 35624"), || {
        "svg lost the original value".into()
    })?;

    let md = dir.join("clip.md");
    let svg_path = dir.join("clip.svg");
    let o = run(&[
        "report",
        "--store",
        &layout.root().display().to_string(),
        "--series",
        key.as_str(),
        "--markdown",
        &md.display().to_string(),
        "--svg",
        &svg_path.display().to_string(),
        "--clip",
        "4500",
    ]);
    ensure(matches!(o.status.code(), Some(0 | 3)), || stderr(&o))?;
    let after = fs::read(&path).map_err(|e| e.to_string())?;
    ensure(before == after, || "store bytes changed".into())?;
    ensure(series.values()[2] == 35624.0, || {
        "series value changed".into()
    })?;
    Ok("y=4500, clipped, original 35624 kept; store byte-identical after report".into())
}

fn gha_file(dir: &Path, i: usize, value: f64) -> Result<String, String> {
    let path = dir.join(format!("run-{i:03}.json"));
    let doc =
        serde_json::json!([{ "name": "Kieker-java-binary-file", "unit": "ns", "value": value }]);
    fs::write(&path, doc.to_string()).map_err(|e| e.to_string())?;
    Ok(path.display().to_string())
}

fn build_pipeline_store(dir: &Path, store: &str, values: &[f64]) -> Result<String, String> {
    let mut key = String::new();
    for (i, &v) in values.iter().enumerate() {
        let file = gha_file(dir, i, v)?;
        let ts = (epoch() + Hours::hours(3 * i as i64))
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let o = run(&[
            "ingest",
            "--store",
            store,
            "--format",
            "gha-json",
            "--series-prefix",
            "moobench",
            "--commit",
            synthetic_commit(i).as_str(),
            "--timestamp",
            &ts,
            "--trigger",
            "schedule",
            "--env",
            "os=ubuntu-24.04",
            &file,
        ]);
        ensure(o.status.success(), || stderr(&o))?;
        key = stdout(&o).trim().to_string();
    }
    Ok(key)
}

/// Runs detect + report on one store, returning (exit code, outputs).
fn pipeline_outputs(
    dir: &Path,
    store: &str,
    key: &str,
    tag: &str,
) -> Result<(i32, Vec<Vec<u8>>), String> {
    let det = run(&[
        "detect", "--store", store, "--series", key, "--output", "json",
    ]);
    let code = det.status.code().ok_or("detect killed")?;
    let md = dir.join(format!("{tag}.md"));
    let svg = dir.join(format!("{tag}.svg"));
    let rep = run(&[
        "report",
        "--store",
        store,
        "--series",
        key,
        "--markdown",
        &md.display().to_string(),
        "--svg",
        &svg.display().to_string(),
        "--clip",
        "4500",
    ]);
    ensure(rep.status.code() == Some(code), || {
        format!(
            "report exit {:?} vs detect {code}: {}",
            rep.status.code(),
            stderr(&rep)
        )
    })?;
    let read = |p: &Path| fs::read(p).map_err(|e| e.to_string());
    Ok((code, vec![det.stdout, read(&md)?, read(&svg)?]))
}

fn criterion_8(dir: &Path) -> Check {
    let regress_dir = dir.join("e2e-regress");
    let flat_dir = dir.join("e2e-flat");
    fs::create_dir_all(&regress_dir).map_err(|e| e.to_string())?;
    fs::create_dir_all(&flat_dir).map_err(|e| e.to_string())?;
    let regress = simulate_values(
        &SimSpec::new(60, 2500.0)
            .shift(30, 0.30)
            .noise(0.01)
            .seed(42),
    )
    .map_err(|e| e.to_string())?;
    let regress_store = regress_dir.join("store").display().to_string();
    let key = build_pipeline_store(&regress_dir, &regress_store, &regress)?;
    let flat_store = flat_dir.join("store").display().to_string();
    let flat_key = build_pipeline_store(&flat_dir, &flat_store, &[2500.0; 60])?;
    ensure(
        key == "moobench/kieker-java-binary-file/os=ubuntu-24.04",
        || key.clone(),
    )?;

    let (code, first) = pipeline_outputs(&regress_dir, &regress_store, &key, "a")?;
    ensure(code == 3, || format!("regression store exit {code}"))?;
    let (_, second) = pipeline_outputs(&regress_dir, &regress_store, &key, "b")?;
    ensure(first == second, || {
        "regression outputs differ between runs".into()
    })?;
    let md = String::from_utf8_lossy(&first[1]).into_owned();
    ensure(md.contains("1 significant change point detected"), || {
        md.clone()
    })?;
    let svg = String::from_utf8_lossy(&first[2]).into_owned();
    ensure(svg.matches("class=\"change-marker\"").count() == 1, || {
        "marker count".into()
    })?;

    let (code, flat_a) = pipeline_outputs(&flat_dir, &flat_store, &flat_key, "a")?;
    ensure(code == 0, || format!("constant store exit {code}"))?;
    let (_, flat_b) = pipeline_outputs(&flat_dir, &flat_store, &flat_key, "b")?;
    ensure(flat_a == flat_b, || {
        "constant outputs differ between runs".into()
    })?;
    Ok(
        "exit 3 on regression, 0 on constant; json, markdown and svg byte-identical on rerun"
            .into(),
    )
}

fn criterion_9(dir: &Path) -> Check {
    let layout = StoreLayout::new(dir.join("crash-store"));
    let key = SeriesKey::parse("crash/test").map_err(|e| e.to_string())?;
    let series =
        simulate(&SimSpec::new(40, 2500.0).noise(0.02).seed(5)).map_err(|e| e.to_string())?;
    for p in series.points() {
        store_append(&layout, &key, p).map_err(|e| e.to_string())?;
    }
    let path = layout.path_for(&key);
    let bytes = fs::read(&path).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let cut = rng.random_range(0..=bytes.len());
        fs::write(&path, &bytes[..cut]).map_err(|e| e.to_string())?;
        let loaded = store_load(&layout, &key).map_err(|e| format!("cut {cut}: {e}"))?;
        let complete = bytes[..cut].iter().filter(|&&b| b == b'\n').count();
        ensure(
            loaded.series.points() == &series.points()[..complete],
            || {
                format!(
                    "cut {cut}: {} points, expected {complete}",
                    loaded.series.len()
                )
            },
        )?;
    }
    Ok(format!(
        "50 truncations of a {}-byte file all loaded a complete prefix",
        bytes.len()
    ))
}

fn criterion_10(dir: &Path) -> Check {
    let root = dir.join("service-store");
    let layout = StoreLayout::new(&root);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut keys = Vec::new();
    for s in 0..10 {
        let n = rng.random_range(20..=80);
        let mut spec = SimSpec::new(n, rng.random_range(100.0..5000.0))
            .noise(rng.random_range(0.005..0.05))
            .seed(rng.random());
        if rng.random_bool(0.7) {
            spec = spec.shift(rng.random_range(8..n - 8), rng.random_range(-0.4..0.6));
        }
        if rng.random_bool(0.3) {
            spec = spec.outliers(0.03, 6.0);
        }
        let key = SeriesKey::parse(&format!("random/store-{s}")).map_err(|e| e.to_string())?;
        for p in simulate(&spec).map_err(|e| e.to_string())?.points() {
            store_append(&layout, &key, p).map_err(|e| e.to_string())?;
        }
        keys.push(key);
    }
    let addr = spawn_server(&root, perfdrift::service::DEFAULT_MAX_BODY);
    let store = root.display().to_string();
    let mut with_changes = 0;
    for (i, key) in keys.iter().enumerate() {
        let (pvalue, magnitude, seed) = (
            ["0.001", "0.01"][i % 2],
            ["0.05", "0.02"][i % 2],
            i.to_string(),
        );
        let cli = run(&[
            "detect",
            "--store",
            &store,
            "--series",
            key.as_str(),
            "--output",
            "json",
            "--pvalue",
            pvalue,
            "--magnitude",
            magnitude,
            "--seed",
            &seed,
            "--permutations",
            "999",
        ]);
        let cli_json: Value =
            serde_json::from_slice(&cli.stdout).map_err(|e| format!("{key}: {e}"))?;
        let (status, body) = http(
            addr,
            "GET",
            &format!("/api/v1/changes/{key}?pvalue={pvalue}&magnitude={magnitude}&seed={seed}"),
            None,
        );
        ensure(status == 200, || format!("{key}: status {status}: {body}"))?;
        let svc_json: Value = serde_json::from_str(&body).map_err(|e| e.to_string())?;
        ensure(cli_json == svc_json, || {
            format!("{key}: cli {cli_json} vs service {svc_json}")
        })?;
        let n = svc_json["changes"].as_array().map_or(0, Vec::len);
        ensure((cli.status.code() == Some(3)) == (n > 0), || {
            format!("{key}: exit code")
        })?;
        if n > 0 {
            with_changes += 1;
        }
    }
    Ok(format!("10 stores identical ({with_changes} with changes)"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    let criteria: Vec<Criterion<'_>> = vec![
        ("divergence oracle equivalence", Box::new(criterion_1)),
        ("default config reachability", Box::new(criterion_2)),
        ("magnitude filter boundary", Box::new(criterion_3)),
        ("null calibration", Box::new(criterion_4)),
        ("injected-change recall", Box::new(criterion_5)),
        ("statistical oracle parity", Box::new(criterion_6)),
        ("clipping fidelity", Box::new(move || criterion_7(dir))),
        ("end-to-end pipeline", Box::new(move || criterion_8(dir))),
        ("store crash tolerance", Box::new(move || criterion_9(dir))),
        ("service parity", Box::new(move || criterion_10(dir))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
