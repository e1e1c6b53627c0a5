use super::log::{ApproachDepart, TickRecord, ZoneStats};
use crate::Vec3;

/// Width of a clearance band used to match approach and departure samples.
pub const CLEARANCE_BAND: f64 = 0.1;

/// Speeds within `radius` of `center` against the open-space maximum.
pub fn zone_stats(ticks: &[TickRecord], center: &Vec3, radius: f64, safe_distance: f64) -> Option<ZoneStats> {
    let zone: Vec<f64> = ticks
        .iter()
        .filter(|r| (r.position - center).norm() <= radius)
        .map(|r| r.velocity.norm())
        .collect();
    let open = ticks
        .iter()
        .filter(|r| r.clearance >= safe_distance && (r.position - center).norm() > radius)
        .map(|r| r.velocity.norm())
        .fold(f64::NEG_INFINITY, f64::max);
    if zone.is_empty() || !open.is_finite() {
        return None;
    }
    Some(ZoneStats {
        min_zone_speed: zone.iter().copied().fold(f64::INFINITY, f64::min),
        mean_zone_speed: zone.iter().sum::<f64>() / zone.len() as f64,
        open_max_speed: open,
    })
}

/// Mean speed while heading into obstacles (`η > 1`) and away from them
/// (`η < 1`), over ticks with clearance in `[0, safe_distance)`.
///
/// Samples are grouped into clearance bands of [`CLEARANCE_BAND`]; each mean
/// is the average of per-band means over bands holding both kinds.
pub fn approach_depart(ticks: &[TickRecord], safe_distance: f64) -> Option<ApproachDepart> {
    let bands = (safe_distance / CLEARANCE_BAND).ceil().max(1.0) as usize;
    let mut sums = vec![[0.0f64; 4]; bands];
    for r in ticks {
        if !(r.clearance >= 0.0 && r.clearance < safe_distance) {
            continue;
        }
        let b = ((r.clearance / CLEARANCE_BAND) as usize).min(bands - 1);
        let speed = r.velocity.norm();
        if r.eta > 1.0 + 1e-9 {
            sums[b][0] += speed;
            sums[b][1] += 1.0;
        } else if r.eta < 1.0 - 1e-9 {
            sums[b][2] += speed;
            sums[b][3] += 1.0;
        }
    }
    let matched: Vec<_> = sums.iter().filter(|s| s[1] > 0.0 && s[3] > 0.0).collect();
    if matched.is_empty() {
        return None;
    }
    let k = matched.len() as f64;
    Some(ApproachDepart {
        approach_mean: matched.iter().map(|s| s[0] / s[1]).sum::<f64>() / k,
        depart_mean: matched.iter().map(|s| s[2] / s[3]).sum::<f64>() / k,
        matched_bands: matched.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(x: f64, speed: f64, clearance: f64, eta: f64) -> TickRecord {
        TickRecord {
            t: 0.0,
            position: Vec3::new(x, 0.0, 1.0),
            velocity: Vec3::new(speed, 0.0, 0.0),
            acceleration: Vec3::zeros(),
            clearance,
            eta,
        }
    }

    #[test]
    fn zone_excludes_far_and_cluttered_samples() {
        let ticks = vec![
            rec(0.0, 3.0, 2.0, 1.0),
            rec(9.5, 1.0, 0.4, 1.8),
            rec(10.0, 0.8, 0.3, 1.0),
            rec(12.0, 2.5, 0.5, 0.2),
        ];
        let z = zone_stats(&ticks, &Vec3::new(10.0, 0.0, 1.0), 1.0, 0.8).unwrap();
        assert_eq!(z.min_zone_speed, 0.8);
        assert_eq!(z.open_max_speed, 3.0);
        assert!((z.mean_zone_speed - 0.9).abs() < 1e-12);
    }

    #[test]
    fn matches_bands_only() {
        let ticks = vec![
            rec(0.0, 1.0, 0.35, 1.5),
            rec(0.0, 2.0, 0.36, 0.5),
            // Unmatched approach band is ignored.
            rec(0.0, 0.1, 0.05, 1.9),
            // Neutral and open samples are ignored.
            rec(0.0, 9.0, 0.36, 1.0),
            rec(0.0, 9.0, 1.5, 0.5),
        ];
        let a = approach_depart(&ticks, 0.8).unwrap();
        assert_eq!(a.matched_bands, 1);
        assert_eq!((a.approach_mean, a.depart_mean), (1.0, 2.0));
        assert!(approach_depart(&ticks[2..], 0.8).is_none());
    }
}
