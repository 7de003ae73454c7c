//! Early-warning metrics: alerts are matched to gold episodes by entity and
//! construct when they start no earlier than a lead window before onset.

use classlogic::eval::{early_warning_metrics, Episode};
use classlogic::fact::TimeRef;

fn span(a: u64, b: u64) -> TimeRef {
    TimeRef::interval(a, b).expect("ordered")
}

fn main() {
    let gold = vec![
        Episode::new(span(300, 420), "confusion_candidate", "student_2").with_onset(320),
        Episode::new(span(900, 1000), "confusion_candidate", "student_5"),
        Episode::new(span(1500, 1600), "confusion_candidate", "student_1"),
    ];
    let alerts = vec![
        // 30 ticks ahead of the observable onset
        Episode::new(span(290, 330), "confusion_candidate", "student_2"),
        // late but inside the episode
        Episode::new(span(950, 980), "confusion_candidate", "student_5"),
        // wrong student
        Episode::new(span(1510, 1530), "confusion_candidate", "student_3"),
    ];
    for window in [0, 30, 60] {
        let m = early_warning_metrics(&alerts, &gold, window, 3600);
        println!(
            "window {window:>2}: matched {} missed {:?} false alerts/h {:.1} mean lead {:?} mean IoU {:?}",
            m.matched, m.missed_rate, m.false_alert_rate, m.mean_lead_time, m.mean_iou
        );
    }
}
