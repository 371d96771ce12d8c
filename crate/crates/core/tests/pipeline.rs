use ibnr_core::io;
use ibnr_core::mcmc::run_chains;
use ibnr_core::nowcast::nowcast_totals;
use ibnr_core::reserve::{reserve_table, CostModel, ReserveInput};
use ibnr_core::synth::{generate, SynthConfig};
use ibnr_core::ChainConfig;

fn short_chains(seed: u64) -> ChainConfig {
    ChainConfig {
        burn_in: 500,
        total_iterations: 1000,
        thin: 5,
        ..ChainConfig::desk(seed)
    }
}

#[test]
fn files_round_trip_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        rows: 30,
        max_delay: 6,
        ..SynthConfig::with_seed(11)
    };
    let synth = generate(&cfg).unwrap();
    let tri_path = dir.path().join("tri.csv");
    io::write_path(&tri_path, |w| io::write_triangle(w, &synth.triangle)).unwrap();
    let back = io::read_path(&tri_path, |r| io::read_triangle(r, cfg.origin)).unwrap();
    assert_eq!(back, synth.triangle);

    let masked = back.mask_to_present(31).unwrap();
    let samples = run_chains(&masked.triangle, &short_chains(11)).unwrap();
    let post_path = dir.path().join("posterior.csv");
    io::write_path(&post_path, |w| io::write_posterior(w, &samples)).unwrap();
    let read = io::read_path(&post_path, io::read_posterior).unwrap();
    assert_eq!(read.draws, samples.draws);
    assert_eq!(read.iterations, samples.iterations);
    assert_eq!(read.config.thin, 5);

    // nowcasts from the file equal those from memory
    let direct = nowcast_totals(&samples, &masked.triangle, 4).unwrap();
    let from_file = nowcast_totals(&read, &masked.triangle, 4).unwrap();
    assert_eq!(direct, from_file);
    assert_eq!(direct.rows.len(), 5);

    let nc_path = dir.path().join("nowcast.csv");
    io::write_path(&nc_path, |w| io::write_nowcast(w, &direct)).unwrap();
    let nc = io::read_path(&nc_path, io::read_nowcast).unwrap();
    assert_eq!(nc.rows.len(), direct.rows.len());
    for (a, b) in nc.rows.iter().zip(&direct.rows) {
        assert_eq!(
            (a.t, a.origin_month, a.observed_partial),
            (b.t, b.origin_month, b.observed_partial)
        );
        assert_eq!((a.point, a.lo95, a.hi95), (b.point, b.lo95, b.hi95));
    }

    let inputs: Vec<ReserveInput> = nc.rows.iter().map(ReserveInput::from).collect();
    let table = reserve_table(&inputs, CostModel::default()).unwrap();
    assert_eq!(table.rows.len(), 5);
    assert!(table.rows.iter().all(|r| r.ibnr >= 0.0));
}

#[test]
fn nowcast_rows_bracket_their_partial_totals() {
    let synth = generate(&SynthConfig::with_seed(12)).unwrap();
    let masked = synth.at_present(73).unwrap();
    let samples = run_chains(&masked.triangle, &short_chains(12)).unwrap();
    let mut nc = nowcast_totals(&samples, &masked.triangle, 12).unwrap();
    nc.attach_realized(&masked);
    assert_eq!(nc.rows.first().map(|r| r.t), Some(62));
    for r in &nc.rows {
        assert!(r.lo95 >= r.observed_partial as f64);
        assert!(r.lo95 <= r.point && r.point <= r.hi95);
        assert!(r.realized.unwrap() >= r.observed_partial);
    }
}
