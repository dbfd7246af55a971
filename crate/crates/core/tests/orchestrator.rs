use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use aerotwin::orchestrator::{
    parse_command_script, reset_experiment, run_experiment, start_experiment, ConsoleServer,
    ControlRequest, EndReason, ExperimentConfig, LogRecord, OrchestratorError, Pacing, Reply,
    ResetMode, LOCK_FILE,
};
use tempfile::TempDir;

fn short_reference(seconds: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::reference();
    cfg.duration_s = Some(seconds);
    cfg
}

fn records(dir: &Path, prefix: &str) -> Vec<LogRecord> {
    let path = find(dir, prefix);
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| LogRecord::parse(l).unwrap())
        .collect()
}

fn find(dir: &Path, prefix: &str) -> PathBuf {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with(prefix))
        .unwrap_or_else(|| panic!("no {prefix} log"))
}

#[test]
fn reference_run_writes_one_log_per_stream() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = ExperimentConfig::reference();
    let v = cfg.validate().unwrap();
    let summary = run_experiment(&cfg, &out, &[]).unwrap();
    assert_eq!(summary.reason, EndReason::Completed);
    assert_eq!(summary.steps, v.total_steps);
    assert_eq!(summary.files.len(), 6);
    assert!(!out.join(LOCK_FILE).exists());

    let vehicle = records(&out, "LPN1_vehicle_");
    assert_eq!(vehicle.len() as u64, v.total_steps);
    assert!(vehicle.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    assert_eq!(vehicle[0].get("phase"), Some("Takeoff"));
    assert_eq!(vehicle.last().unwrap().get("phase"), Some("Landed"));

    let reports = (v.duration_ms() / v.report_interval_ms) as usize;
    for ue in ["LW1", "LW2"] {
        assert_eq!(records(&out, &format!("{ue}_iperf_")).len(), reports);
        assert_eq!(records(&out, &format!("{ue}_ping_")).len(), reports);
    }
    let exp = records(&out, "LPN1_experiment_");
    assert_eq!(exp[0].get("event"), Some("start"));
    assert_eq!(exp.last().unwrap().get("reason"), Some("completed"));
}

#[test]
fn line_format_is_exact() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    run_experiment(&short_reference(1.0), &out, &[]).unwrap();
    let text = fs::read_to_string(find(&out, "LPN1_vehicle_")).unwrap();
    let first = text.lines().next().unwrap();
    let re_ok = first.starts_with("2025-01-01T12:00:00.100Z LPN1 vehicle lat=")
        && first.ends_with(" alt=0.5 phase=Takeoff");
    assert!(re_ok, "{first}");
    let iperf = fs::read_to_string(find(&out, "LW1_iperf_")).unwrap();
    assert!(iperf.starts_with("2025-01-01T12:00:01.000Z LW1 iperf thrpt_mbps=25.200 mcs=QAM64 snr_db="));
}

#[test]
fn refuses_non_empty_output() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("old.log"), "x").unwrap();
    let err = run_experiment(&short_reference(1.0), tmp.path(), &[]).unwrap_err();
    assert!(matches!(err, OrchestratorError::OutputNotEmpty(_)));
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let mut cfg = short_reference(1.0);
    cfg.step_ms = 0;
    assert!(matches!(
        run_experiment(&cfg, &out, &[]),
        Err(OrchestratorError::ConfigInvalid(_))
    ));
    assert!(!out.exists());
}

#[test]
fn truncation_warning_is_logged() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    run_experiment(&short_reference(2.0), &out, &[]).unwrap();
    let exp = records(&out, "LPN1_experiment_");
    assert!(exp.iter().any(|r| r.get("event") == Some("warning")
        && r.get("msg").unwrap().starts_with("duration_2.0s_truncates_mission")));
}

#[test]
fn scripted_hold_freezes_the_vehicle() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let script = parse_command_script("10 HOLD\n10 STATUS\n20 RESUME\n21 GOTO 99\n").unwrap();
    let summary = run_experiment(&short_reference(30.0), &out, &script).unwrap();
    assert_eq!(summary.rejected_commands, 1);

    let vehicle = records(&out, "LPN1_vehicle_");
    // Records 100..=199 are written after the steps ending at 10.1 s .. 20.0 s.
    let held = &vehicle[99..200];
    assert!(held.windows(2).all(|w| w[0].fields == w[1].fields));
    assert_ne!(vehicle[200].fields, vehicle[199].fields);

    let exp = records(&out, "LPN1_experiment_");
    let cmds: Vec<_> = exp
        .iter()
        .filter(|r| r.get("event") == Some("command"))
        .map(|r| (r.get("cmd").unwrap().to_string(), r.get("result").unwrap().to_string()))
        .collect();
    assert_eq!(
        cmds,
        [("HOLD", "OK"), ("RESUME", "OK"), ("GOTO", "ERR")].map(|(a, b)| (a.to_string(), b.to_string()))
    );
    let status = exp.iter().find(|r| r.get("event") == Some("status")).unwrap();
    assert_eq!(status.get("mode"), Some("Hold"));
    assert_eq!(status.timestamp.format("%S%.3f").to_string(), "10.000");
}

#[test]
fn console_session_against_live_run() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = short_reference(600.0);
    let mut handle =
        start_experiment(&cfg, &out, Vec::new(), Pacing::Realtime { speedup: 50.0 }).unwrap();
    assert!(out.join(LOCK_FILE).exists());
    assert!(matches!(
        reset_experiment(&out, ResetMode::Delete),
        Err(OrchestratorError::RunInProgress(_))
    ));

    let server = ConsoleServer::bind("127.0.0.1:0", handle.commands()).unwrap();
    let mut session = Vec::new();
    aerotwin::orchestrator::run_console_client(
        server.local_addr(),
        "status\nHOLD\nJUMP\nRESUME\n".as_bytes(),
        &mut session,
    )
    .unwrap();
    let replies = String::from_utf8(session).unwrap();
    let lines: Vec<_> = replies.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("OK mode=Mission"));
    assert_eq!(lines[1], "OK");
    assert!(lines[2].starts_with("ERR"));
    assert_eq!(lines[3], "OK");

    std::thread::sleep(Duration::from_millis(50));
    let summary = handle.stop().unwrap();
    assert_eq!(summary.reason, EndReason::Stopped);
    assert!(summary.steps < 6000);
    assert!(matches!(handle.stop(), Err(OrchestratorError::NotRunning)));
    // Queued requests after the run has ended are refused.
    assert_eq!(
        handle.commands().send(ControlRequest::Stop).ok(),
        None::<Reply>
    );
    server.shutdown();

    let exp = records(&out, "LPN1_experiment_");
    assert_eq!(exp.last().unwrap().get("reason"), Some("stopped"));
    assert!(!out.join(LOCK_FILE).exists());
}

#[test]
fn run_finishes_on_its_own() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let mut handle =
        start_experiment(&short_reference(1.0), &out, Vec::new(), Pacing::Fast).unwrap();
    while handle.is_running() {
        std::thread::sleep(Duration::from_millis(5));
    }
    assert!(matches!(handle.stop(), Err(OrchestratorError::NotRunning)));
    let summary = handle.wait().unwrap();
    assert_eq!(summary.steps, 10);
}

#[test]
fn reset_delete_and_archive() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(reset_experiment(&out, ResetMode::Delete).unwrap(), None);

    run_experiment(&short_reference(1.0), &out, &[]).unwrap();
    let archive = reset_experiment(&out, ResetMode::Archive).unwrap().unwrap();
    assert_eq!(archive, tmp.path().join("run-archive-001"));
    assert_eq!(fs::read_dir(&archive).unwrap().count(), 6);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);

    run_experiment(&short_reference(1.0), &out, &[]).unwrap();
    let second = reset_experiment(&out, ResetMode::Archive).unwrap().unwrap();
    assert_eq!(second, tmp.path().join("run-archive-002"));

    run_experiment(&short_reference(1.0), &out, &[]).unwrap();
    reset_experiment(&out, ResetMode::Delete).unwrap();
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
    // A reset directory accepts a fresh run.
    run_experiment(&short_reference(1.0), &out, &[]).unwrap();
}

#[test]
fn seed_changes_shadowed_output() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = short_reference(5.0);
    cfg.channel.shadowing_sigma_db = 4.0;
    run_experiment(&cfg, &tmp.path().join("a"), &[]).unwrap();
    cfg.seed += 1;
    run_experiment(&cfg, &tmp.path().join("b"), &[]).unwrap();
    let a = records(&tmp.path().join("a"), "LW1_iperf_");
    let b = records(&tmp.path().join("b"), "LW1_iperf_");
    assert_ne!(
        a.iter().map(|r| r.get("snr_db")).collect::<Vec<_>>(),
        b.iter().map(|r| r.get("snr_db")).collect::<Vec<_>>()
    );
}

#[test]
fn ten_second_counting_contract() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    run_experiment(&short_reference(10.0), &out, &[]).unwrap();
    assert_eq!(records(&out, "LPN1_vehicle_").len(), 100);
    assert_eq!(records(&out, "LW1_iperf_").len(), 10);
    assert_eq!(records(&out, "LW2_iperf_").len(), 10);
}

#[test]
fn stop_right_after_start_leaves_valid_logs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let mut handle = start_experiment(
        &short_reference(100.0),
        &out,
        Vec::new(),
        Pacing::Realtime { speedup: 1.0 },
    )
    .unwrap();
    let summary = handle.stop().unwrap();
    assert_eq!(summary.reason, EndReason::Stopped);
    assert!(summary.steps >= 1);
    let vehicle = records(&out, "LPN1_vehicle_");
    assert_eq!(vehicle.len() as u64, summary.steps);
    let end = records(&out, "LPN1_experiment_").pop().unwrap();
    assert_eq!(end.get("event"), Some("end"));
    assert_eq!(end.get("reason"), Some("stopped"));
}

/// Recompute every interval's bits from first principles: open-loop vehicle
/// position, link SNR, MCS choice and a per-subframe round-robin deal.
#[test]
fn logged_throughput_matches_subframe_sum() {
    use aerotwin::channel::{channel_matrix, ChannelNode};
    use aerotwin::flightsim::position_at;
    use aerotwin::mac::{bits_per_rb, select_mcs, McsSelection};

    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let cfg = ExperimentConfig::reference();
    run_experiment(&cfg, &out, &[]).unwrap();
    let v = cfg.validate().unwrap();

    let n_rb = cfg.cell.n_rb as usize;
    let ues = &v.user_equipment;
    let mut bits = vec![0u64; ues.len()];
    let mut cursor = 0usize;
    let mut last_connected: Vec<usize> = Vec::new();
    let mut expected: Vec<Vec<f64>> = vec![Vec::new(); ues.len()];
    for k in 1..=v.total_steps {
        let pos = position_at(&cfg.flight_plan, (k * cfg.step_ms) as f64 / 1000.0).position;
        let nodes: Vec<ChannelNode> = cfg
            .nodes
            .iter()
            .map(|n| ChannelNode { id: n.id.clone(), position: n.position.unwrap_or(pos) })
            .collect();
        let m = channel_matrix(&nodes, &cfg.channel, &cfg.radio, cfg.cell.disconnect_snr_db, k).unwrap();
        let sel: Vec<McsSelection> = ues
            .iter()
            .map(|&u| {
                let snr = m.link(v.base_station, u).unwrap().snr_db;
                select_mcs(snr, cfg.mcs_table.entries(), cfg.cell.disconnect_snr_db).unwrap()
            })
            .collect();
        let connected: Vec<usize> = (0..ues.len()).filter(|&i| sel[i].is_connected()).collect();
        if connected != last_connected {
            cursor = 0;
            last_connected = connected.clone();
        }
        for _ in 0..cfg.step_ms {
            if connected.is_empty() {
                continue;
            }
            // Hand out RBs one at a time starting at the cursor.
            for rb in 0..n_rb {
                let i = connected[(cursor + rb) % connected.len()];
                bits[i] += bits_per_rb(sel[i].mcs().unwrap(), &cfg.cell);
            }
            cursor = (cursor + n_rb) % connected.len();
        }
        if (k * cfg.step_ms).is_multiple_of(v.report_interval_ms) {
            for i in 0..ues.len() {
                expected[i].push(bits[i] as f64 / 1e6);
                bits[i] = 0;
            }
        }
    }
    for (i, ue) in ["LW1", "LW2"].iter().enumerate() {
        let logged: Vec<f64> = records(&out, &format!("{ue}_iperf_"))
            .iter()
            .map(|r| r.get("thrpt_mbps").unwrap().parse().unwrap())
            .collect();
        assert_eq!(logged.len(), expected[i].len());
        for (a, b) in logged.iter().zip(&expected[i]) {
            assert!((a - b).abs() <= 5e-4, "{ue}: logged {a}, recomputed {b}");
        }
    }
}
