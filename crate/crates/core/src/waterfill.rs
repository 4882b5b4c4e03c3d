//! Scalar water-filling over parallel channels with noise-normalized gains.

/// Gains at or below `max_gain * GAIN_FLOOR` get no power.
pub const GAIN_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Power per mode, same order as the input gains.
    pub powers: Vec<f64>,
    /// Water level `mu`; active modes satisfy `p_k = mu - 1/g_k`.
    pub level: f64,
}

impl Allocation {
    pub fn active(&self) -> usize {
        self.powers.iter().filter(|&&p| p > 0.0).count()
    }
}

/// Maximizes `sum_k log(1 + g_k p_k)` subject to `sum_k p_k = budget`,
/// `p_k >= 0`. The budget is always spent in full when some gain is positive.
///
/// The piecewise-linear budget equation is solved exactly by trying active
/// sets of decreasing size over the gains sorted in descending order.
/// Returns `None` when no gain is positive.
pub fn water_fill(gains: &[f64], budget: f64) -> Option<Allocation> {
    assert!(budget >= 0.0, "water_fill: negative budget");
    let gmax = gains.iter().copied().fold(0.0, f64::max);
    if gmax <= 0.0 {
        return None;
    }
    let floor = gmax * GAIN_FLOOR;
    let mut order: Vec<usize> = (0..gains.len()).filter(|&k| gains[k] > floor).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));

    let mut level = 0.0;
    let mut active = 0;
    for k in (1..=order.len()).rev() {
        let inv_sum: f64 = order[..k].iter().map(|&i| 1.0 / gains[i]).sum();
        let mu = (budget + inv_sum) / k as f64;
        if mu - 1.0 / gains[order[k - 1]] > 0.0 || k == 1 {
            level = mu;
            active = k;
            break;
        }
    }
    let mut powers = vec![0.0; gains.len()];
    for &i in &order[..active] {
        powers[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    Some(Allocation { powers, level })
}
