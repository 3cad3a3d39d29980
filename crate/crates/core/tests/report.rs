use std::collections::BTreeMap;

use lassocv::report::summary::mean_line_points;
use lassocv::report::{
    parse_config, read_records, run_simulation, summarize, violin_svg, write_records,
    write_summary, RECORDS_HEADER, SUMMARY_HEADER,
};
use lassocv::simulate::ReplicationRecord;
use lassocv::types::{NoiseKind, Selector, SimCondition};
use lassocv::Error;
use rand::Rng;

fn condition(p: usize) -> SimCondition {
    SimCondition {
        n: 100,
        p,
        rho: 0.2,
        alpha: 0.1,
        snr: 5.0,
        noise_kind: NoiseKind::Gaussian,
        replications: 100,
        seed: 1,
    }
}

fn synthetic_records(reps: usize, seed: u64) -> Vec<ReplicationRecord> {
    let mut g = lassocv::rng::from_seed(seed);
    let mut out = Vec::new();
    for p in [350, 75] {
        for rep in 0..reps {
            for sel in Selector::ALL {
                let ratio: f64 = 1.0 + g.random::<f64>() * (1.0 + sel as u8 as f64);
                out.push(ReplicationRecord {
                    condition: condition(p),
                    rep_index: rep,
                    selector: sel,
                    t_hat: g.random::<f64>() * 3.0,
                    risk_ratio: ratio,
                    excess_risk: ratio - 1.2,
                    wall_time_ms: g.random::<f64>() * 100.0,
                    error: None,
                });
            }
        }
    }
    out
}

#[test]
fn header_is_frozen() {
    assert_eq!(
        RECORDS_HEADER,
        "condition_id,n,p,rho,alpha,snr,noise,rep,selector,t_hat,risk_ratio,excess_risk,wall_time_ms"
    );
}

#[test]
fn records_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    let recs = synthetic_records(100, 1);
    write_records(&recs[..500], &path).unwrap();
    let rows = read_records(&path).unwrap();
    assert_eq!(rows.len(), 500);
    for (r, row) in recs.iter().zip(&rows) {
        assert_eq!(row.condition_id, r.condition.id());
        assert_eq!(row.selector, r.selector.to_string());
        assert_eq!(row.rep, r.rep_index);
        assert_eq!(row.t_hat.to_bits(), r.t_hat.to_bits());
        assert_eq!(row.risk_ratio.to_bits(), r.risk_ratio.to_bits());
        assert_eq!(row.excess_risk.to_bits(), r.excess_risk.to_bits());
        assert_eq!(row.wall_time_ms.to_bits(), r.wall_time_ms.to_bits());
        assert_eq!(row.rho.to_bits(), 0.2f64.to_bits());
    }
}

#[test]
fn empty_record_set_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    write_records(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{RECORDS_HEADER}\n"));
    assert!(read_records(&path).unwrap().is_empty());
}

#[test]
fn write_errors_name_the_path() {
    let err = write_records(&[], std::path::Path::new("/nonexistent/dir/records.csv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/records.csv"), "{err}");
}

#[test]
fn summary_matches_an_independent_aggregation_of_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let recs = synthetic_records(37, 2);
    let records_path = dir.path().join("records.csv");
    write_records(&recs, &records_path).unwrap();
    let summary = summarize(&recs).unwrap();
    let summary_path = dir.path().join("summary.csv");
    write_summary(&summary, &summary_path).unwrap();

    // aggregate the raw CSV text directly
    let text = std::fs::read_to_string(&records_path).unwrap();
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let e = sums.entry((f[0].to_string(), f[8].to_string())).or_default();
        e.0 += f[10].parse::<f64>().unwrap();
        e.1 += 1;
    }
    let out = std::fs::read_to_string(&summary_path).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some(SUMMARY_HEADER));
    let mut seen = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (sum, count) = sums[&(f[0].to_string(), f[1].to_string())];
        assert_eq!(f[2].parse::<usize>().unwrap(), count);
        let mean: f64 = f[4].parse().unwrap();
        assert!((mean - sum / count as f64).abs() < 1e-12);
        seen += 1;
    }
    assert_eq!(seen, sums.len());
}

#[test]
fn summary_rows_are_sorted() {
    let summary = summarize(&synthetic_records(5, 3)).unwrap();
    let keys: Vec<(String, Selector)> =
        summary.iter().map(|r| (r.condition_id.clone(), r.selector)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(summary.len(), 10);
    assert_eq!(summary[0].selector, Selector::Cv);
}

#[test]
fn failed_records_are_counted_not_averaged() {
    let mut recs = synthetic_records(4, 4);
    recs[0].error = Some("boom".into());
    recs[0].risk_ratio = f64::NAN;
    let summary = summarize(&recs).unwrap();
    let row = summary
        .iter()
        .find(|r| r.condition_id == recs[0].condition.id() && r.selector == recs[0].selector)
        .unwrap();
    assert_eq!(row.failures, 1);
    assert_eq!(row.count, 3);
    assert!(row.mean.is_finite());
}

#[test]
fn empty_summary_is_an_error() {
    assert!(matches!(summarize(&[]), Err(Error::InvalidInput(_))));
}

#[test]
fn constant_ratio_draws_a_tick_at_the_mean() {
    let svg = violin_svg("c", &[(Selector::Cv, vec![2.0; 20])]).unwrap();
    assert!(svg.contains(r#"<line class="violin""#));
    let pts = mean_line_points(&svg);
    assert_eq!(pts.len(), 1);
    // the tick is centred on the mean
    let tick = svg.lines().find(|l| l.contains(r#"class="violin""#)).unwrap();
    let y = |attr: &str| -> f64 {
        let i = tick.find(attr).unwrap() + attr.len() + 2;
        tick[i..].split('"').next().unwrap().parse().unwrap()
    };
    assert!(((y("y1") + y("y2")) / 2.0 - pts[0].1).abs() < 0.011);
}

#[test]
fn violin_output_is_deterministic_and_sloped() {
    let a: Vec<f64> = (0..50).map(|i| 1.0 + (i as f64 * 0.37).sin().abs() * 0.2).collect();
    let b: Vec<f64> = a.iter().map(|x| x + 2.0).collect();
    let groups = [(Selector::Cv, a), (Selector::Ssr, b)];
    let svg = violin_svg("cond", &groups).unwrap();
    assert_eq!(svg, violin_svg("cond", &groups).unwrap());
    let pts = mean_line_points(&svg);
    assert_eq!(pts.len(), 2);
    assert!(pts[1].0 > pts[0].0);
    assert!(pts[0].1 - pts[1].1 > 50.0, "{pts:?}");
    assert_eq!(svg.matches(r#"<path class="violin""#).count(), 2);
}

#[test]
fn config_defaults_are_materialized() {
    let plan = parse_config("p = 75, 350, 1000\nalpha = 0.1, 0.33, 0.5\n").unwrap();
    assert_eq!(plan.conditions.len(), 9);
    assert!(plan.conditions.iter().all(|c| c.n == 100 && c.replications == 100));
    for key in lassocv::report::config::KEYS {
        assert!(plan.resolved.contains_key(key), "{key}");
    }
    match parse_config("rho = 1.2") {
        Err(Error::Config { key, message }) => {
            assert_eq!(key, "rho");
            assert!(message.contains("outside"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn simulation_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let plan =
        parse_config("n = 20\np = 15, 30\nreplications = 2\nk = 4\ngrid_size = 10\nselectors = cv, gcv\n")
            .unwrap();
    let out = run_simulation(&plan, dir.path(), 2).unwrap();
    assert_eq!(out.records.len(), 2 * 2 * 2);
    assert_eq!(read_records(&dir.path().join("records.csv")).unwrap().len(), 8);
    assert_eq!(out.figures.len(), 2);
    for f in &out.figures {
        assert!(std::fs::read_to_string(f).unwrap().contains("mean-line"));
    }
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains(&format!("config_digest={}", plan.digest())));
    assert!(manifest.contains("record_count=8"));
    assert!(out.manifest.finished_at >= out.manifest.started_at);
}
