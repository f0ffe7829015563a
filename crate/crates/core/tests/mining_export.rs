use srlflow::mining::{discover, export_dot, export_matrix_csv, DetailSettings, TransitionMatrix};

fn matrix(acts: &[&str], traces: &[&[&str]]) -> TransitionMatrix {
    let acts = acts.iter().map(|s| s.to_string()).collect();
    let traces: Vec<Vec<&str>> = traces.iter().map(|t| t.to_vec()).collect();
    TransitionMatrix::from_sequences(acts, &traces).unwrap()
}

fn four_activity() -> TransitionMatrix {
    matrix(
        &["A", "B", "C", "D"],
        &[&["A", "B", "C"], &["A", "B", "C"], &["A", "B", "C"], &["A", "D", "C"]],
    )
}

#[test]
fn two_activity_matrix_csv_fixture() {
    let m = matrix(&["A", "B"], &[&["A", "B", "A"], &["A", "A"]]);
    assert_eq!(export_matrix_csv(&m), include_str!("golden/two_activity.csv"));
}

#[test]
fn four_activity_dot_golden() {
    let model = discover(&four_activity(), DetailSettings::new(1.0, 0.0).unwrap()).unwrap();
    assert_eq!(export_dot(&model), include_str!("golden/four_activity.dot"));
}

#[test]
fn dot_is_byte_stable() {
    let m = four_activity();
    let a = export_dot(&discover(&m, DetailSettings::new(1.0, 0.0).unwrap()).unwrap());
    let b = export_dot(&discover(&m.clone(), DetailSettings::new(1.0, 0.0).unwrap()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn full_detail_dot_lists_every_positive_count() {
    let m = four_activity();
    let dot = export_dot(&discover(&m, DetailSettings::default()).unwrap());
    let mut labels: Vec<u64> = dot
        .lines()
        .filter(|l| l.contains("->") && !l.contains("__start__") && !l.contains("__end__"))
        .map(|l| {
            let rest = &l[l.find("label=\"").unwrap() + 7..];
            rest[..rest.find('"').unwrap()].parse().unwrap()
        })
        .collect();
    labels.sort_unstable();
    assert_eq!(labels, vec![1, 1, 3, 3]);
    assert!(!dot.contains("dashed"));
}
