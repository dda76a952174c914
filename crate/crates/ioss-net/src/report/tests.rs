use super::*;

fn sample_row(m: MValue, rho: f64) -> MRow {
    MRow {
        m,
        rho_g: Some(rho),
        rho_lg: Some(rho / 2.0),
        verdict_traj: Verdict::from_radius(rho),
        verdict_lyap: Verdict::from_radius(rho / 2.0),
        mu: None,
        lambda_sigma: None,
        traj_constants: None,
        gains: vec![],
        notes: BTreeMap::new(),
    }
}

#[test]
fn sig6_formats_stably() {
    assert_eq!(sig6(0.0), "0");
    assert_eq!(sig6(1.0), "1.00000");
    assert_eq!(sig6(0.97543219), "0.975432");
    assert_eq!(sig6(123456.49), "123456");
    assert_eq!(sig6(-0.5), "-0.500000");
    assert_eq!(sig6(3.2e-7), "3.20000e-7");
    assert_eq!(sig6(f64::INFINITY), "inf");
}

#[test]
fn json_round_trip_is_identity() {
    let report = Report {
        provenance: Some(Provenance {
            seed: 9,
            version: "0.1.0".into(),
            config_hash: "ab".repeat(32),
        }),
        m_rows: vec![sample_row(MValue::Finite(3), 0.8), sample_row(MValue::Infinite, 1.2)],
        falsification: vec![FalsifySummary {
            m: 3,
            check: "assumption-1".into(),
            checks_run: 100,
            violations: 0,
            worst_slack: 0.25,
            discarded_pairs: 3,
        }],
        ..Report::default()
    };
    let text = report.to_json().unwrap();
    let back = Report::from_json(&text).unwrap();
    assert_eq!(back, {
        let mut r = report.clone();
        r.normalize();
        r
    });
    assert_eq!(back.to_json().unwrap(), text);
}

#[test]
fn rows_render_sorted_by_m() {
    let mut report = Report {
        m_rows: vec![
            sample_row(MValue::Infinite, 1.2),
            sample_row(MValue::Finite(4), 1.1),
            sample_row(MValue::Finite(3), 0.8),
        ],
        ..Report::default()
    };
    report.normalize();
    let md = report.to_markdown();
    let pos3 = md.find("| 3 |").unwrap();
    let pos4 = md.find("| 4 |").unwrap();
    let posinf = md.find("| inf |").unwrap();
    assert!(pos3 < pos4 && pos4 < posinf);
    assert!(md.contains("✓"));
    assert!(md.contains("✗"));
}

#[test]
fn empty_report_renders_headers_only() {
    let md = Report::default().to_markdown();
    assert!(md.starts_with("# Network i-IOSS certification report"));
    assert!(!md.contains("| M |"));
}

#[test]
fn merge_replaces_rows_and_sorts() {
    let mut a = Report {
        m_rows: vec![sample_row(MValue::Finite(4), 1.1), sample_row(MValue::Finite(3), 0.8)],
        ..Report::default()
    };
    let b = Report {
        m_rows: vec![sample_row(MValue::Finite(4), 0.5), sample_row(MValue::Infinite, 1.2)],
        ..Report::default()
    };
    a.merge(b);
    assert_eq!(a.m_rows.len(), 3);
    assert_eq!(a.m_rows[0].m, MValue::Finite(3));
    assert_eq!(a.m_rows[1].m, MValue::Finite(4));
    assert_eq!(a.m_rows[1].rho_g, Some(0.5));
    assert_eq!(a.m_rows[2].m, MValue::Infinite);
}

#[test]
fn not_run_cells_render_with_reason() {
    let mut row = sample_row(MValue::Infinite, 0.9);
    row.verdict_traj = Verdict::NotRun;
    row.rho_g = None;
    row.notes
        .insert("trajectory".into(), "classes are not uniform".into());
    let report = Report {
        m_rows: vec![row],
        ..Report::default()
    };
    let md = report.to_markdown();
    assert!(md.contains("| inf | – | – |"));
    assert!(md.contains("trajectory not run: classes are not uniform"));
}
