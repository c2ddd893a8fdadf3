use std::ffi::{CStr, CString};
use std::ptr;

use dacmdp::dataset::{generate, BehaviorPolicy};
use dacmdp::envs::EnvSpec;
use dacmdp::DatasetFormat;
use dacmdp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dacmdp_last_error()) }.to_string_lossy().into_owned()
}

fn grid_dataset(dir: &std::path::Path) -> CString {
    let env = EnvSpec::grid("simple").unwrap().with_exploring_starts(true);
    let ds = generate(&env, &BehaviorPolicy::Random, 4000, 3).unwrap();
    let path = dir.join("d.bin");
    ds.save(&path, DatasetFormat::Binary).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn full_pipeline_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let path = grid_dataset(dir.path());
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(dacmdp_dataset_load(path.as_ptr(), DacmdpFormat::Auto, &mut ds), DacmdpStatus::Ok);
        assert_eq!(dacmdp_dataset_len(ds), 4000);
        assert_eq!(dacmdp_dataset_state_dim(ds), 4);

        let mut cfg = dacmdp_config_default();
        assert_eq!((cfg.k, cfg.k_pi), (5, 11));
        cfg.cost = 0.01;
        cfg.gamma = 0.95;
        cfg.k_pi = 5;
        let mut mdp = ptr::null_mut();
        assert_eq!(dacmdp_compile(ds, &cfg, &mut mdp), DacmdpStatus::Ok, "{}", last_error());
        let n = dacmdp_mdp_n_states(mdp);
        let a = dacmdp_mdp_n_actions(mdp);
        assert_eq!(a, 3);

        let mut sol = ptr::null_mut();
        assert_eq!(dacmdp_solve(mdp, -1.0, 1e-8, 10_000, 1, &mut sol), DacmdpStatus::Ok);
        assert!(dacmdp_solution_converged(sol));
        assert!(dacmdp_solution_residual(sol) <= 1e-8);
        let mut v = vec![0.0; n];
        let mut q = vec![0.0; n * a];
        assert_eq!(dacmdp_solution_values(sol, v.as_mut_ptr(), v.len()), DacmdpStatus::Ok);
        assert_eq!(dacmdp_solution_q(sol, q.as_mut_ptr(), q.len()), DacmdpStatus::Ok);
        for s in 0..n {
            let best = q[s * a..(s + 1) * a].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(v[s], best);
        }
        assert_eq!(dacmdp_solution_values(sol, v.as_mut_ptr(), n - 1), DacmdpStatus::ErrConfig);

        // penalized LEFT (action 1) is never chosen
        let m = CString::new("action_penalty:1:1e6").unwrap();
        let mut pen = ptr::null_mut();
        assert_eq!(dacmdp_mdp_apply_modifier(mdp, m.as_ptr(), &mut pen), DacmdpStatus::Ok);
        let mut pen_sol = ptr::null_mut();
        assert_eq!(dacmdp_solve(pen, -1.0, 1e-8, 10_000, 0, &mut pen_sol), DacmdpStatus::Ok);
        let mut policy = ptr::null_mut();
        assert_eq!(dacmdp_policy_new(ds, pen, pen_sol, &mut policy), DacmdpStatus::Ok, "{}", last_error());
        dacmdp_dataset_free(ds);
        for x in 1..9 {
            for h in 0..4 {
                let (dx, dy) = [(0.0, 1.0), (1.0, 0.0), (0.0, -1.0), (-1.0, 0.0)][h];
                let obs = [x as f32 / 9.0, 0.5, dx, dy];
                let mut act = usize::MAX;
                assert_eq!(dacmdp_policy_act(policy, obs.as_ptr(), obs.len(), &mut act), DacmdpStatus::Ok);
                assert_ne!(act, 1);
            }
        }
        let mut scores = [0.0; 3];
        let obs = [0.5f32, 0.5, 0.0, 1.0];
        assert_eq!(dacmdp_policy_scores(policy, obs.as_ptr(), 4, scores.as_mut_ptr(), 3), DacmdpStatus::Ok);
        assert!(scores[1] < -1e5);
        assert_eq!(dacmdp_policy_act(policy, obs.as_ptr(), 3, &mut 0), DacmdpStatus::ErrData);
        assert!(last_error().contains("dimension"), "{}", last_error());

        let out = CString::new(dir.path().join("q.bin").to_str().unwrap()).unwrap();
        assert_eq!(dacmdp_solution_save(sol, out.as_ptr()), DacmdpStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(dacmdp_solution_load(out.as_ptr(), &mut back), DacmdpStatus::Ok);
        assert_eq!(dacmdp_solution_iterations(back), dacmdp_solution_iterations(sol));

        dacmdp_policy_free(policy);
        dacmdp_solution_free(back);
        dacmdp_solution_free(pen_sol);
        dacmdp_solution_free(sol);
        dacmdp_mdp_free(pen);
        dacmdp_mdp_free(mdp);
    }
}

#[test]
fn errors_are_categorized_with_messages() {
    unsafe {
        let mut ds = ptr::null_mut();
        let missing = CString::new("/nonexistent/d.bin").unwrap();
        assert_eq!(dacmdp_dataset_load(missing.as_ptr(), DacmdpFormat::Binary, &mut ds), DacmdpStatus::ErrIo);
        assert!(ds.is_null());
        assert!(last_error().contains("/nonexistent/d.bin"));

        assert_eq!(dacmdp_dataset_load(ptr::null(), DacmdpFormat::Auto, &mut ds), DacmdpStatus::ErrNull);
        assert!(last_error().contains("path"));

        let dir = tempfile::tempdir().unwrap();
        let path = grid_dataset(dir.path());
        assert_eq!(dacmdp_dataset_load(path.as_ptr(), DacmdpFormat::Binary, &mut ds), DacmdpStatus::Ok);
        let mut cfg = dacmdp_config_default();
        cfg.gamma = 1.0;
        let mut mdp = ptr::null_mut();
        assert_eq!(dacmdp_compile(ds, &cfg, &mut mdp), DacmdpStatus::ErrConfig);
        assert!(last_error().contains("gamma < 1"), "{}", last_error());

        cfg.gamma = 0.9;
        assert_eq!(dacmdp_compile(ds, &cfg, &mut mdp), DacmdpStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(dacmdp_solve(mdp, 1.5, 1e-6, 100, 1, &mut sol), DacmdpStatus::ErrConfig);
        assert_eq!(dacmdp_solve(mdp, f64::NAN, 1e-6, 100, 1, &mut sol), DacmdpStatus::ErrConfig);
        let bad = CString::new("teleport:3").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(dacmdp_mdp_apply_modifier(mdp, bad.as_ptr(), &mut out), DacmdpStatus::ErrConfig);
        assert!(out.is_null());

        // null handles are harmless in accessors and free functions
        assert_eq!(dacmdp_mdp_n_states(ptr::null()), 0);
        assert!(dacmdp_solution_residual(ptr::null()).is_nan());
        dacmdp_mdp_free(ptr::null_mut());

        dacmdp_mdp_free(mdp);
        dacmdp_dataset_free(ds);
    }
}

#[test]
fn header_declares_the_exported_functions() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dacmdp.h")).unwrap();
    for f in [
        "dacmdp_last_error",
        "dacmdp_dataset_load",
        "dacmdp_compile",
        "dacmdp_solve",
        "dacmdp_policy_new",
        "dacmdp_policy_act",
        "dacmdp_policy_free",
        "DACMDP_STATUS_ERR_NUMERIC",
    ] {
        assert!(header.contains(f), "missing {f}");
    }
    let version = unsafe { CStr::from_ptr(dacmdp_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

/// Build `tests/smoke.c` against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    // target/tmp -> target/<profile>
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    let lib = tmp.parent().unwrap().join(profile).join("libdacmdp_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let exe = tmp.join("dacmdp_smoke");
    let status = std::process::Command::new(cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());

    let dir = tempfile::tempdir().unwrap();
    let path = grid_dataset(dir.path());
    let out = std::process::Command::new(&exe).arg(path.to_str().unwrap()).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout} {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("bad=1"), "{stdout}");
    assert!(stdout.starts_with("states="), "{stdout}");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
