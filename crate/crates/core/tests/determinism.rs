use bns_hedge::hedging::{backtest, lrm_put_t0, BacktestOptions, OptionKind, OptionSpec, Sampling};
use bns_hedge::measure_change::{density_report, DensityOptions};
use bns_hedge::model::{BnsParams, TimeGrid};
use bns_hedge::rng::Streams;
use bns_hedge::subordinator::SubordinatorSpec;

fn params() -> BnsParams<f64> {
    BnsParams::new(100.0, 0.03, 0.0, 1.0, 0.04, 1.0, SubordinatorSpec::ig_ou(1.0, 4.0).unwrap()).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = params();
    let grid = TimeGrid::uniform(1.0, 8).unwrap();
    let put = OptionSpec::new(OptionKind::Put, 100.0).unwrap();
    let work = || {
        let streams = Streams::new(77);
        let xi = lrm_put_t0(&p, 100.0, 50_000, &streams, Sampling::Direct).unwrap().xi;
        let d = density_report(&p, &grid, 20_000, &streams, DensityOptions::default()).unwrap();
        let bt = backtest(&p, &put, &grid, 500, &BacktestOptions::default(), &streams).unwrap();
        (xi.to_bits(), d.e_z.to_bits(), d.e_z_sq.to_bits(), bt.summary.terminal_error_std.to_bits(), bt.paths)
    };
    let one = in_pool(1, work);
    let four = in_pool(4, work);
    assert_eq!(one, four);
}

#[test]
fn seeds_and_streams_separate_results() {
    let p = params();
    let a = lrm_put_t0(&p, 100.0, 20_000, &Streams::new(1), Sampling::Direct).unwrap();
    let b = lrm_put_t0(&p, 100.0, 20_000, &Streams::new(2), Sampling::Direct).unwrap();
    let a2 = lrm_put_t0(&p, 100.0, 20_000, &Streams::new(1), Sampling::Direct).unwrap();
    assert_ne!(a.xi, b.xi);
    assert_eq!(a.xi.to_bits(), a2.xi.to_bits());
}
