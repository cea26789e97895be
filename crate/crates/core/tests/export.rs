use std::fs;

use sairod::export::{
    default_labels, export_dtmc, export_mdp, import_dtmc, write_space_table, ExplicitFiles,
    ExportOptions, TableHeader,
};
use sairod::{
    build_policy_dtmc, build_reachable, ActionSet, ModelError, ModelKind, Parameters, Policy,
    StateVector,
};

fn read(path: &std::path::Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn single_state_chain() {
    let params = Parameters::reference(1, 1);
    let v = StateVector::untested(0, 0, 0, 1, 0, 0);
    let dtmc = build_policy_dtmc(&[v], &Policy::constant(2), &params, ModelKind::Simplified).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let labels = default_labels(dtmc.space(), &[0], 0.2);
    let files = export_dtmc(dir.path().join("one"), &dtmc, &labels, ExportOptions::default()).unwrap();
    assert_eq!(read(&files.tra), "0 0 1\n");
    assert_eq!(read(&files.sta), "(s,a,i,r,o,d,q,ra)\n0:(0,0,0,1,0,0,0,0)\n");
    assert_eq!(
        read(&files.lab),
        "0=\"init\" 1=\"hospital_full\" 2=\"deaths_ge_frac\" 3=\"all_absorbed\"\n0: 0 3\n"
    );
}

#[test]
fn export_import_export_is_byte_identical() {
    let params = Parameters::reference(5, 2);
    let start = StateVector::new(3, 1, 1, 0, 0, 0, 0, 0);
    let policy = Policy::Constant { m: 2, t: 1 };
    let dtmc = build_policy_dtmc(&[start], &policy, &params, ModelKind::Full).unwrap();
    let init = dtmc.space().rank(&start).unwrap();
    let labels = default_labels(dtmc.space(), &[init], 0.2);
    let dir = tempfile::tempdir().unwrap();
    for headers in [false, true] {
        let options = ExportOptions { prism_headers: headers };
        let first = export_dtmc(dir.path().join("a"), &dtmc, &labels, options).unwrap();
        let (back, back_labels) = import_dtmc(dir.path().join("a")).unwrap();
        assert_eq!(back_labels, labels);
        assert_eq!(back.num_states(), dtmc.num_states());
        assert_eq!(back.nnz(), dtmc.nnz());
        let second = export_dtmc(dir.path().join("b"), &back, &back_labels, options).unwrap();
        for (x, y) in [
            (&first.sta, &second.sta),
            (&first.tra, &second.tra),
            (&first.lab, &second.lab),
        ] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
        for i in 0..dtmc.num_states() {
            assert_eq!(dtmc.row(i), back.row(i));
        }
    }
}

#[test]
fn mdp_rows_cover_every_admissible_action() {
    let params = Parameters::reference(4, 1);
    let start = StateVector::untested(3, 1, 0, 0, 0, 0);
    let actions = ActionSet::meetings(1, 3).unwrap();
    let (space, table) = build_reachable(&[start], &actions, &params, ModelKind::Simplified).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let labels = default_labels(&space, &[space.rank(&start).unwrap()], 0.25);
    let files = export_mdp(
        dir.path().join("mdp"),
        &space,
        &table,
        &labels,
        ExportOptions { prism_headers: true },
    )
    .unwrap();
    let text = read(&files.tra);
    let mut lines = text.lines();
    let header: Vec<usize> = lines
        .next()
        .unwrap()
        .split(' ')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(header, vec![space.len(), 3 * space.len(), table.nnz()]);
    let mut mass = vec![0.0; 3 * space.len()];
    for line in lines {
        let f: Vec<&str> = line.split(' ').collect();
        let (s, a): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        mass[3 * s + a] += f[3].parse::<f64>().unwrap();
    }
    assert!(mass.iter().all(|m| (m - 1.0).abs() < 1e-12));
}

#[test]
fn space_table_serialization() {
    let params = Parameters::reference(3, 1);
    let start = StateVector::untested(2, 1, 0, 0, 0, 0);
    let actions = ActionSet::meetings(1, 2).unwrap();
    let (space, table) = build_reachable(&[start], &actions, &params, ModelKind::Simplified).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_space_table(dir.path(), &space, &table, &params).unwrap();
    let header: TableHeader = serde_json::from_str(&read(&dir.path().join("header.json"))).unwrap();
    assert_eq!(header.states, space.len());
    assert_eq!(header.transitions, table.nnz());
    assert_eq!(header.parameters, params);
    assert_eq!(header.kind, ModelKind::Simplified);
    let states = read(&dir.path().join("states.txt"));
    assert_eq!(states.lines().count(), space.len());
    assert_eq!(states.lines().next().unwrap(), "0 0 0 0 0 3 0 0");
    assert_eq!(read(&dir.path().join("transitions.txt")).lines().count(), table.nnz());
}

#[test]
fn malformed_files_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("bad");
    let files = ExplicitFiles::with_stem(&stem);
    fs::write(&files.sta, "(s,a,i,r,o,d,q,ra)\n0:(0,0,0,1,0,0,0,0)\n1:(1,0,0,0,0,0,0,0)\n").unwrap();
    fs::write(&files.lab, "0=\"init\"\n1: 0\n").unwrap();

    fs::write(&files.tra, "0 0 1\n").unwrap();
    fs::write(&files.sta, "(s,a,i,r,o,d,q,ra)\n0:(1,0,0,0,0,0,0,0)\n1:(0,0,0,1,0,0,0,0)\n").unwrap();
    match import_dtmc(&stem) {
        Err(ModelError::Parse { reason, .. }) => assert!(reason.contains("canonical order")),
        other => panic!("expected a parse error, got {other:?}"),
    }
    fs::write(&files.sta, "(s,a,i,r,o,d,q,ra)\n0:(0,0,0,1,0,0,0,0)\n1:(1,0,0,0,0,0,0,0)\n").unwrap();

    fs::write(&files.tra, "0 0 1\n1 1 zero\n1 0 0.5\n").unwrap();
    match import_dtmc(&stem) {
        Err(ModelError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }

    fs::write(&files.tra, "0 0 1\n1 1 0.5\n1 0 0.4\n").unwrap();
    let err = import_dtmc(&stem).unwrap_err();
    assert!(matches!(err, ModelError::Normalization { .. }), "{err:?}");

    fs::write(&files.tra, "0 0 1\n1 7 0.5\n1 0 0.5\n").unwrap();
    match import_dtmc(&stem) {
        Err(ModelError::Parse { line, reason, .. }) => {
            assert_eq!(line, 2);
            assert!(reason.contains("out of range"));
        }
        other => panic!("expected a parse error, got {other:?}"),
    }

    fs::write(&files.tra, "0 0 1\n1 1 0.5\n1 0 0.5\n").unwrap();
    let (dtmc, labels) = import_dtmc(&stem).unwrap();
    assert_eq!(dtmc.num_states(), 2);
    assert_eq!(labels[0].states, vec![false, true]);
}

#[test]
fn roundtrip_check_detects_tampering() {
    let params = Parameters::reference(4, 1);
    let start = StateVector::untested(3, 1, 0, 0, 0, 0);
    let dtmc = build_policy_dtmc(&[start], &Policy::constant(3), &params, ModelKind::Simplified).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let labels = default_labels(dtmc.space(), &[dtmc.space().rank(&start).unwrap()], 0.25);
    let files = export_dtmc(dir.path().join("m"), &dtmc, &labels, ExportOptions { prism_headers: true }).unwrap();
    let report = sairod::export::roundtrip_check(dir.path().join("m"), dir.path().join("again")).unwrap();
    assert!(report.is_identical());
    assert_eq!(report.transitions, dtmc.nnz());

    // A probability with a redundant trailing zero parses to the same value but changes the bytes.
    let tra = read(&files.tra);
    let line = tra.lines().skip(1).find(|l| l.contains('.')).unwrap().to_string();
    fs::write(&files.tra, tra.replacen(&format!("{line}\n"), &format!("{line}0\n"), 1)).unwrap();
    let report = sairod::export::roundtrip_check(dir.path().join("m"), dir.path().join("again")).unwrap();
    assert_eq!(report.identical, [true, false, true]);
}
