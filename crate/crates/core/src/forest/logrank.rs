use super::ForestError;
use crate::survcore::Outcome;

/// Squared standardized log-rank statistic from per-event-time counts.
///
/// `left_at_risk[k]` and `left_events[k]` are the left group's counts at the
/// k-th event time, `at_risk[k]` and `events[k]` the pooled ones. `None` when
/// the variance vanishes.
pub(crate) fn statistic_from_counts(
    left_at_risk: &[f64],
    left_events: &[f64],
    at_risk: &[f64],
    events: &[f64],
) -> Option<f64> {
    let mut diff = 0.0;
    let mut var = 0.0;
    for k in 0..at_risk.len() {
        let (yl, dl, y, d) = (left_at_risk[k], left_events[k], at_risk[k], events[k]);
        diff += dl - yl * d / y;
        if y > 1.0 {
            var += yl * (y - yl) * d * (y - d) / (y * y * (y - 1.0));
        }
    }
    (var > 0.0).then(|| diff * diff / var)
}

/// Two-sample log-rank statistic (squared, standardized) for a candidate
/// split of a node into `left` and `right`. Larger means better separation.
pub fn logrank_split_statistic(left: &[Outcome], right: &[Outcome]) -> Result<f64, ForestError> {
    if left.is_empty() || right.is_empty() {
        return Err(ForestError::DegenerateSplit);
    }
    let mut times: Vec<f64> = left
        .iter()
        .chain(right)
        .filter(|o| o.event)
        .map(|o| o.time)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let count = |group: &[Outcome]| -> (Vec<f64>, Vec<f64>) {
        let mut at_risk = vec![0.0; times.len()];
        let mut events = vec![0.0; times.len()];
        for o in group {
            let reach = times.partition_point(|&t| t <= o.time);
            for y in &mut at_risk[..reach] {
                *y += 1.0;
            }
            if o.event {
                events[reach - 1] += 1.0;
            }
        }
        (at_risk, events)
    };
    let (yl, dl) = count(left);
    let (yr, dr) = count(right);
    let y: Vec<f64> = yl.iter().zip(&yr).map(|(a, b)| a + b).collect();
    let d: Vec<f64> = dl.iter().zip(&dr).map(|(a, b)| a + b).collect();
    statistic_from_counts(&yl, &dl, &y, &d).ok_or(ForestError::DegenerateSplit)
}
