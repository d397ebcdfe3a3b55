use super::*;
use crate::composer;

fn source() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../source")
}

fn manifest(args: &str) -> SimulationManifest {
    let args: Vec<&str> = args.split_whitespace().collect();
    composer::setup(&source(), &args).unwrap()
}

fn sim(args: &str, par: &str, workers: usize) -> Simulation {
    let m = manifest(args);
    let p = load_params(&m, par, None).unwrap();
    Simulation::init(m, p, workers).unwrap()
}

const CHANNEL: &str = "incompFlow/ChannelFlow -auto -2d -nxb=8 -nyb=8";
const CHANNEL_PAR: &str = r#"
nblockx = 2
nblocky = 2
xl_boundary_type = "inflow_ins"
xr_boundary_type = "outflow_ins"
yl_boundary_type = "noslip_ins"
yr_boundary_type = "noslip_ins"
ins_invReynolds = 0.05
dr_dt = 0.005
nend = 20
dr_debug = .true.
"#;

fn checkpoint_bytes(s: &Simulation) -> Vec<u8> {
    Checkpoint::capture_checkpoint(&s.grid, s.state.nstep as u64, s.state.time).encode()
}

#[test]
fn zero_steps_returns_initial_state() {
    let mut s = sim(CHANNEL, &format!("{CHANNEL_PAR}\nnend = 0\n"), 1);
    let before = checkpoint_bytes(&s);
    s.evolve().unwrap();
    assert_eq!(s.state.nstep, 0);
    assert_eq!(checkpoint_bytes(&s), before);
}

#[test]
fn channel_starts_at_rest_with_inflow_boundary() {
    let s = sim(CHANNEL, CHANNEL_PAR, 1);
    let f = s.flow.as_ref().unwrap();
    for id in [f.vars.vel[1], f.vars.pres] {
        assert!(s.grid.gather(id).data.iter().all(|&v| v == 0.0));
    }
    let u = s.grid.gather(f.vars.vel[0]);
    for (k, &v) in u.data.iter().enumerate() {
        assert_eq!(v, if k % u.n[0] == 0 { 1.0 } else { 0.0 });
    }
    let d = s.grid.domain();
    assert_eq!(d.boundary[0][0], BoundaryType::InflowIns);
    assert_eq!(d.inflow[0][0], 1.0);
    assert_eq!(d.nblocks, [2, 2, 1]);
}

#[test]
fn bubble_seeds_signed_distance() {
    let par = "sim_bubbleR = 0.2\nnend = 0\n";
    let s = sim("incompFlow/StaticBubble -auto -2d -nxb=16 -nyb=16", par, 1);
    let p = s.phase.as_ref().unwrap();
    let phi = s.grid.gather(p.vars.phi);
    let dx = s.grid.dx();
    for j in 0..16 {
        for i in 0..16 {
            let (x, y) = ((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dx);
            let want = 0.2 - ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
            assert!((phi.data[i + 16 * j] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn units_outside_manifest_are_never_initialized() {
    let s = sim("incompFlow/HeatConduction -auto -2d -nxb=8 -nyb=8", "nend = 0", 1);
    assert!(s.init_log.iter().any(|u| u == "physics/HeatAD"));
    assert!(!s.init_log.iter().any(|u| u.starts_with("physics/IncompNS")));
    assert!(s.flow.is_none() && s.grid.var("uface").is_err());
}

#[test]
fn missing_initializer_is_reported() {
    let m = manifest(CHANNEL);
    let p = load_params(&m, "", None).unwrap();
    let err = Simulation::init_with(m, p, 1, &AppRegistry::empty()).err().unwrap();
    assert!(matches!(err, DriverError::MissingInitializer(a) if a == "ChannelFlow"));
}

#[test]
fn unknown_provider_is_rejected() {
    let mut m = manifest(CHANNEL);
    m.bindings.insert("projection".into(), "physics/Elsewhere".into());
    assert!(matches!(check_bindings(&m), Err(DriverError::UnknownImplementation { .. })));
}

#[test]
fn step_sequence_follows_fixed_order() {
    let args = "incompFlow/FlowBoiling -auto -2d -nxb=16 -nyb=16";
    let par = "mph_invWeber = 0.004\nmph_rhoGas = 0.1\nnend = 1\nmph_redistance_every = 1\nyl_boundary_type = \"noslip_ins\"\nyr_boundary_type = \"outflow_ins\"\nht_buoyancy = 0.1\nins_gravY = -1.0\nsim_bubbleY = 0.3\nsim_bubbleR = 0.1";
    let mut s = sim(args, par, 1);
    s.enable_trace();
    s.evolve().unwrap();
    let got: Vec<&str> = s.trace().iter().map(|(_, op)| *op).collect();
    let want = [
        ops::FILL_GUARD_CELLS,
        ops::MPH_SET_PROPERTIES,
        ops::INS_ADVECTION,
        ops::INS_DIFFUSION,
        ops::HEAT_RHS,
        ops::HT_BUOYANCY,
        ops::MPH_VEL_FORCING,
        ops::OUTLET_FORCING,
        ops::INS_PREDICTOR,
        ops::HEAT_ADVANCE,
        ops::INS_PROJECT,
        ops::MPH_ADVECT,
        ops::MPH_REDISTANCE,
        ops::INS_FACE_TO_CENTER,
    ];
    assert_eq!(got, want);
}

#[test]
fn channel_divergence_bound_holds_each_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = sim(CHANNEL, CHANNEL_PAR, 2);
    s.set_output_dir(dir.path());
    s.evolve().unwrap();
    let r = s.finalize().unwrap();
    assert_eq!(r.steps, 20);
    assert!(r.max_divergence <= 1e-8, "{}", r.max_divergence);
}

#[test]
fn runs_are_bit_identical_across_worker_counts() {
    let mut bytes = Vec::new();
    for w in [1, 2, 4] {
        let mut s = sim(CHANNEL, CHANNEL_PAR, w);
        s.evolve().unwrap();
        bytes.push(checkpoint_bytes(&s));
    }
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[0], bytes[2]);
}

#[test]
fn report_round_trips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = sim(CHANNEL, &format!("{CHANNEL_PAR}\nnend = 3\n"), 1);
    s.set_output_dir(dir.path());
    s.evolve().unwrap();
    let r = s.finalize().unwrap();
    let v: toml::Table = r.to_toml().parse().unwrap();
    assert_eq!(v["steps"].as_integer(), Some(3));
    assert!(v["wall_seconds"].as_float().unwrap() >= 0.0);
    for (_, secs) in v["phase_seconds"].as_table().unwrap() {
        assert!(secs.as_float().unwrap() >= 0.0);
    }
    assert!(dir.path().join("INS_Simulation_chk_0001").exists());
}

#[test]
fn heat_does_not_feed_back_into_the_flow() {
    let mut a = sim(CHANNEL, CHANNEL_PAR, 1);
    let mut b = sim(&format!("{CHANNEL} +heat"), CHANNEL_PAR, 1);
    assert!(b.heat.is_some() && a.heat.is_none());
    a.evolve().unwrap();
    b.evolve().unwrap();
    for name in ["uface", "vface", "pres", "velx", "vely"] {
        let (ia, ib) = (a.grid.var(name).unwrap(), b.grid.var(name).unwrap());
        let (ga, gb) = (a.grid.gather(ia), b.grid.gather(ib));
        assert!(ga.data.iter().zip(&gb.data).all(|(x, y)| x.to_bits() == y.to_bits()), "{name}");
    }
}

#[test]
fn restart_reproduces_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let par = format!("{CHANNEL_PAR}\ncheckpointFileIntervalStep = 5\nnend = 10\n");
    let mut full = sim(CHANNEL, &par, 1);
    full.set_output_dir(dir.path().join("full"));
    std::fs::create_dir_all(full.output_dir()).unwrap();
    full.write_initial_output().unwrap();
    full.evolve().unwrap();
    full.finalize().unwrap();

    let mut rs = sim(CHANNEL, &par, 2);
    rs.set_output_dir(dir.path().join("restart"));
    std::fs::create_dir_all(rs.output_dir()).unwrap();
    rs.restart(&full.checkpoint_path(5)).unwrap();
    assert_eq!(rs.state.nstep, 5);
    rs.evolve().unwrap();
    rs.finalize().unwrap();
    let r = io::compare_files(&full.checkpoint_path(10), &rs.checkpoint_path(10), 0.0).unwrap();
    assert_eq!(r.verdict, io::Verdict::Success, "{r}");
}

#[test]
fn heat_conduction_decays() {
    let mut s = sim("incompFlow/HeatConduction -auto -2d -nxb=16 -nyb=16", "ht_alpha = 0.1\ndr_dt = 0.001\nnend = 50", 1);
    let temp = s.heat.as_ref().unwrap().vars.temp;
    let a0 = s.grid.gather(temp).data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    s.evolve().unwrap();
    let a1 = s.grid.gather(temp).data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let want = a0 * (-4.0 * std::f64::consts::PI.powi(2) * 0.1 * 0.05f64).exp();
    assert!((a1 - want).abs() / want < 0.02, "{a1} vs {want}");
}

#[test]
fn cylinder_interior_is_held_near_rest() {
    let par = r#"
nblockx = 2
xmax = 2.0
xl_boundary_type = "inflow_ins"
xr_boundary_type = "outflow_ins"
yl_boundary_type = "slip_ins"
yr_boundary_type = "slip_ins"
sim_cylR = 0.2
dr_dt = 0.002
nend = 20
"#;
    let mut s = sim("incompFlow/CylinderFlow -auto -2d -nxb=32 -nyb=32", par, 2);
    s.evolve().unwrap();
    let b = s.body.as_ref().unwrap();
    let lm = s.grid.gather(b.vars.lmda);
    let u = s.grid.gather(s.flow.as_ref().unwrap().vars.center[0]);
    let inside = lm.data.iter().zip(&u.data).filter(|(l, _)| **l < -2.0 * s.grid.dx());
    let worst = inside.fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn corrupt_checkpoint_is_refused_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = sim(CHANNEL, &format!("{CHANNEL_PAR}\nnend = 2\n"), 1);
    s.set_output_dir(dir.path());
    s.evolve().unwrap();
    s.finalize().unwrap();
    let path = s.last_checkpoint_path().unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[40] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    let mut r = sim(CHANNEL, CHANNEL_PAR, 1);
    assert!(matches!(r.restart(&path), Err(DriverError::Io(IoError::Checksum { .. }))));
}
