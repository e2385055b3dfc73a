use std::io::BufReader;
use std::time::Instant;

use irsbeam::bench::{
    dump_config, emit_results, load_config, parse_config, preset, read_results, run_sweep, run_sweep_into, ModelCache,
    OutputFormat, SweepResult, SweepRow, SweepSpec, SweepVariable, COLUMNS,
};
use irsbeam::pipeline::{ExperimentConfig, Method};
use irsbeam::Error;
use proptest::prelude::*;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.array.ap_antennas = 3;
    cfg.array.irs_rows = 3;
    cfg.array.irs_cols = 3;
    cfg.placement.users = 2;
    cfg.training.tau = 2;
    cfg.training.examples = 8;
    cfg.training.iterations = 3;
    cfg.training.batch_size = 4;
    cfg.training.conv_padding = 1;
    cfg.online.iterations = 30;
    cfg.genie.iterations = 40;
    cfg.genie.restarts = 2;
    cfg
}

fn spec(values: Vec<f64>, methods: Vec<Method>, mc: usize) -> SweepSpec {
    SweepSpec { variable: SweepVariable::RicianBetaDb, values, methods, mc_count: mc, seed: 5 }
}

fn desk_text() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/presets/desk.toml")).unwrap()
}

#[test]
fn paper_preset_holds_reference_parameters() {
    let (cfg, spec) = preset("paper").unwrap();
    assert_eq!((cfg.array.ap_antennas, cfg.placement.users), (6, 3));
    assert_eq!((cfg.array.irs_rows, cfg.array.irs_cols), (6, 6));
    assert_eq!((cfg.training.tau, cfg.training.examples), (5, 2000));
    assert_eq!(cfg.link.noise_dbm, -96.0);
    assert_eq!(cfg.channel.beta0_db, -30.0);
    assert_eq!((cfg.channel.eta_ai, cfg.channel.eta_user), (2.2, 3.0));
    assert_eq!(spec.unwrap().values, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
}

#[test]
fn missing_field_is_named() {
    let text = desk_text().replace("power_dbm = 30.0\n", "");
    let err = parse_config(&text).unwrap_err();
    assert!(matches!(err, Error::ConfigParse(_)));
    assert!(err.to_string().contains("power_dbm"), "{err}");
}

#[test]
fn unknown_key_is_rejected_with_line() {
    let text = desk_text().replace("[link]\n", "[link]\ngain_db = 3.0\n");
    let msg = parse_config(&text).unwrap_err().to_string();
    assert!(msg.contains("gain_db") && msg.contains("line"), "{msg}");
}

#[test]
fn invalid_value_names_the_field() {
    let text = desk_text().replace("tau = 5", "tau = 0");
    match parse_config(&text).unwrap_err() {
        Error::InvalidParam { field, .. } => assert_eq!(field, "training.tau"),
        other => panic!("{other}"),
    }
}

#[test]
fn load_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[array\n").unwrap();
    let msg = load_config(&path).unwrap_err().to_string();
    assert!(msg.contains("bad.toml"), "{msg}");
}

#[test]
fn dump_is_canonical() {
    let (cfg, spec) = parse_config(&desk_text()).unwrap();
    let once = dump_config(&cfg, spec.as_ref()).unwrap();
    let (cfg2, spec2) = parse_config(&once).unwrap();
    assert_eq!((&cfg, &spec), (&cfg2, &spec2));
    assert_eq!(dump_config(&cfg2, spec2.as_ref()).unwrap(), once);
}

#[test]
fn one_cell_one_row() {
    let res = run_sweep(&small(), &spec(vec![8.0], vec![Method::Random], 1), &mut ModelCache::in_memory()).unwrap();
    assert_eq!(res.rows.len(), 1);
    let row = &res.rows[0];
    assert_eq!((row.n, row.seed, row.std), (1, 5, 0.0));
    assert!(row.mean >= 0.0);
}

#[test]
fn sweeps_are_paired_and_repeatable() {
    let cfg = small();
    let s = spec(vec![0.0, 10.0], Method::ALL.to_vec(), 4);
    let mut cache = ModelCache::in_memory();
    let a = run_sweep(&cfg, &s, &mut cache).unwrap();
    let b = run_sweep(&cfg, &s, &mut cache).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows.len(), 8);
    for cell in a.channel_digests.chunks(4) {
        assert!(cell.iter().all(|d| d == &cell[0]));
    }
    assert_ne!(a.channel_digests[0], a.channel_digests[4]);
    let genie = a.row(10.0, Method::Genie).unwrap().mean;
    let random = a.row(10.0, Method::Random).unwrap().mean;
    assert!(genie > random);

    let dir = tempfile::tempdir().unwrap();
    for format in [OutputFormat::Table, OutputFormat::Csv, OutputFormat::Jsonl] {
        let (p, q) = (dir.path().join("a"), dir.path().join("b"));
        emit_results(&a, &p, format).unwrap();
        emit_results(&b, &q, format).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
        let back = read_results(BufReader::new(std::fs::File::open(&p).unwrap()), format).unwrap();
        assert_eq!(back, a.rows);
    }
}

#[test]
fn power_sweep_moves_the_rate() {
    let s = SweepSpec { variable: SweepVariable::PowerDbm, ..spec(vec![10.0, 40.0], vec![Method::Random], 3) };
    let res = run_sweep(&small(), &s, &mut ModelCache::in_memory()).unwrap();
    assert!(res.rows[1].mean > res.rows[0].mean);
    assert!(res.rows.iter().all(|r| r.variable == "power_dbm"));
}

#[test]
fn failure_keeps_finished_rows() {
    let s = SweepSpec { variable: SweepVariable::PowerDbm, ..spec(vec![30.0, 4000.0], vec![Method::Random], 2) };
    let mut out = SweepResult::default();
    let run = run_sweep_into(&small(), &s, &mut ModelCache::in_memory(), &mut out);
    assert!(run.is_err());
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].value, 30.0);
}

#[test]
fn unwritable_path_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("out.csv");
    assert!(emit_results(&SweepResult::default(), path, OutputFormat::Csv).is_err());
}

#[test]
fn header_order_is_fixed() {
    for format in [OutputFormat::Table, OutputFormat::Csv] {
        let mut buf = Vec::new();
        irsbeam::bench::write_results(&SweepResult::default(), &mut buf, format).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let names: Vec<&str> = text.trim_end().split([',', ' ']).filter(|s| !s.is_empty()).collect();
        assert_eq!(names, COLUMNS);
        assert!(read_results(text.as_bytes(), format).unwrap().is_empty());
    }
}

#[test]
fn model_cache_reuses_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let first = ModelCache::with_dir(dir.path()).get_or_train(&cfg).unwrap().clone();
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    let second = ModelCache::with_dir(dir.path()).get_or_train(&cfg).unwrap().clone();
    assert_eq!(first.params(), second.params());
}

#[test]
fn runtime_grows_linearly_with_realizations() {
    let cfg = small();
    let time = |mc| {
        let start = Instant::now();
        run_sweep(&cfg, &spec(vec![8.0], vec![Method::Naive], mc), &mut ModelCache::in_memory()).unwrap();
        start.elapsed().as_secs_f64()
    };
    time(2);
    let (t1, t4) = (time(10), time(40));
    let ratio = t4 / t1;
    assert!((2.0..=8.0).contains(&ratio), "ratio {ratio}");
}

proptest! {
    #[test]
    fn rows_round_trip_exactly(
        value in -1e3..1e3f64,
        mean in 0.0..1e3f64,
        std in 0.0..1e2f64,
        n in 1usize..10_000,
        seed in any::<u64>(),
        method in prop::sample::select(vec!["proposed", "genie", "naive", "random"]),
    ) {
        let res = SweepResult {
            rows: vec![SweepRow { variable: "rician_beta_db".into(), value, method: method.into(), mean, std, n, seed }],
            ..Default::default()
        };
        for format in [OutputFormat::Table, OutputFormat::Csv, OutputFormat::Jsonl] {
            let mut buf = Vec::new();
            irsbeam::bench::write_results(&res, &mut buf, format).unwrap();
            prop_assert_eq!(&read_results(buf.as_slice(), format).unwrap(), &res.rows);
        }
    }
}
