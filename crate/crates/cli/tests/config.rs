use hartree::evolution::Direction;
use hartree_cli::RunConfig;

#[test]
fn default_config_round_trips() {
    let cfg = RunConfig::default();
    let text = cfg.to_toml();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    assert_eq!(RunConfig::from_toml(&text).unwrap().to_toml(), text);
}

#[test]
fn edited_config_round_trips() {
    let mut cfg = RunConfig::default();
    cfg.params.n = 5;
    cfg.grid.m = 384;
    cfg.grid.r_max = 321.5;
    cfg.grid.map_kind = "geometric".into();
    cfg.series.settings.a = -1.0;
    cfg.series.settings.fit.extra_degree = 7;
    cfg.evolution.direction = Direction::Backward;
    cfg.evolution.controls.dt_max = 1.0 / 3.0 * 1e-3;
    cfg.evolution.expect = "scatter".into();
    cfg.spectral.options.tau_small = 0.1 + 0.2;
    cfg.convergence.ms = vec![64, 128];
    cfg.output.plots = true;
    let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn empty_document_gives_defaults() {
    assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    let cfg = RunConfig::from_toml("[evolution]\nduration = 7.5\n").unwrap();
    assert_eq!(cfg.evolution.controls.duration, 7.5);
    assert_eq!(cfg.evolution.controls.dt_max, RunConfig::default().evolution.controls.dt_max);
}

#[test]
fn invalid_documents_are_rejected() {
    for bad in [
        "[grid]\nbogus = 1\n",
        "[params]\nn = 2\n",
        "[series]\na = 0.5\n",
        "[series]\ndecay = 0.2\n",
        "[evolution]\nexpect = \"maybe\"\n",
        "[evolution]\ndt_min = 1.0\n",
        "params = 3",
    ] {
        let err = RunConfig::from_toml(bad).unwrap_err();
        assert_eq!(err.exit_code(), hartree_cli::EXIT_USAGE, "{bad}: {err}");
    }
}
