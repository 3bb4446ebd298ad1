use serde::{Deserialize, Serialize};

use super::scale::{bark, LADDER_LEN};
use crate::error::{Error, Result};

/// The three playable bands under the tank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    /// 20–40 Hz, central subwoofers 3 and 4.
    Low,
    /// 50–70 Hz, intermediate subwoofers 2 and 5.
    Mid,
    /// 80–100 Hz, outer subwoofers 1 and 6.
    High,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Low, Band::Mid, Band::High];

    pub fn lo(self) -> f64 {
        match self {
            Band::Low => 20.0,
            Band::Mid => 50.0,
            Band::High => 80.0,
        }
    }

    pub fn hi(self) -> f64 {
        self.lo() + 20.0
    }

    pub fn midpoint(self) -> f64 {
        0.5 * (self.lo() + self.hi())
    }

    /// Point at `norm` ∈ [0, 1] between the band edges.
    pub fn lerp(self, norm: f64) -> f64 {
        let norm = norm.clamp(0.0, 1.0);
        self.lo() + norm * (self.hi() - self.lo())
    }

    pub fn contains(self, f: f64) -> bool {
        (self.lo()..=self.hi()).contains(&f)
    }

    pub fn of_channel(channel: u8) -> Option<Band> {
        match channel {
            3 | 4 => Some(Band::Low),
            2 | 5 => Some(Band::Mid),
            1 | 6 => Some(Band::High),
            _ => None,
        }
    }
}

/// Channel for each Bark rank; each band pair lists its lower channel first.
pub const CHANNELS_BY_RANK: [u8; LADDER_LEN] = [3, 4, 2, 5, 1, 6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandAssignment {
    /// Position in the input slice.
    pub index: usize,
    pub source_freq: f64,
    pub bark: f64,
    pub rank: usize,
    pub channel: u8,
    pub band: Band,
    pub target_freq: f64,
}

/// Remaps six frequencies into the subwoofer bands by Bark rank.
///
/// Ranks pair off low→central, mid→intermediate, high→outer; the target
/// inside each band interpolates the component's Bark value normalized over
/// the six inputs. Output is in input order.
pub fn assign_bands(freqs: &[f64]) -> Result<[BandAssignment; LADDER_LEN]> {
    if freqs.len() != LADDER_LEN {
        return Err(Error::input(format!("expected {LADDER_LEN} frequencies, got {}", freqs.len())));
    }
    if let Some(f) = freqs.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
        return Err(Error::input(format!("frequencies must be positive, got {f}")));
    }
    let barks: Vec<f64> = freqs.iter().map(|&f| bark(f)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..LADDER_LEN).collect();
    order.sort_by(|&a, &b| barks[a].total_cmp(&barks[b]).then(a.cmp(&b)));

    let (min, max) = barks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &b| (lo.min(b), hi.max(b)));
    let spread = max - min;

    let mut out = [BandAssignment {
        index: 0,
        source_freq: 0.0,
        bark: 0.0,
        rank: 0,
        channel: 0,
        band: Band::Low,
        target_freq: 0.0,
    }; LADDER_LEN];
    for (rank, &index) in order.iter().enumerate() {
        let channel = CHANNELS_BY_RANK[rank];
        let band = Band::of_channel(channel).expect("rank table holds valid channels");
        let norm = if spread > 0.0 { (barks[index] - min) / spread } else { 0.5 };
        out[index] = BandAssignment {
            index,
            source_freq: freqs[index],
            bark: barks[index],
            rank,
            channel,
            band,
            target_freq: band.lerp(norm),
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::harmonic_ladder;
    use proptest::prelude::*;

    #[test]
    fn ladder_for_100_hz_spans_band_extremes() {
        let a = assign_bands(&harmonic_ladder(100.0).unwrap()).unwrap();
        assert_eq!(a[0].channel, 3);
        assert_eq!(a[0].target_freq, 20.0);
        assert_eq!(a[5].channel, 6);
        assert_eq!(a[5].target_freq, 100.0);
        let channels: Vec<u8> = a.iter().map(|c| c.channel).collect();
        assert_eq!(channels, vec![3, 4, 2, 5, 1, 6]);
    }

    #[test]
    fn identical_frequencies_take_band_midpoints_in_index_order() {
        let a = assign_bands(&[200.0; 6]).unwrap();
        let targets: Vec<f64> = a.iter().map(|c| c.target_freq).collect();
        assert_eq!(targets, vec![30.0, 30.0, 60.0, 60.0, 90.0, 90.0]);
        let ranks: Vec<usize> = a.iter().map(|c| c.rank).collect();
        assert_eq!(ranks, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn wrong_count_is_rejected() {
        assert!(assign_bands(&[100.0; 5]).is_err());
        assert!(assign_bands(&[100.0; 7]).is_err());
        assert!(assign_bands(&[100.0, 0.0, 1.0, 2.0, 3.0, 4.0]).is_err());
    }

    proptest! {
        #[test]
        fn always_two_channels_per_band(freqs in proptest::array::uniform6(1.0f64..8000.0)) {
            let a = assign_bands(&freqs).unwrap();
            let mut channels: Vec<u8> = a.iter().map(|c| c.channel).collect();
            channels.sort();
            prop_assert_eq!(channels, vec![1, 2, 3, 4, 5, 6]);
            for band in Band::ALL {
                prop_assert_eq!(a.iter().filter(|c| c.band == band).count(), 2);
            }
            for c in &a {
                prop_assert!(c.band.contains(c.target_freq));
                prop_assert_eq!(Band::of_channel(c.channel), Some(c.band));
            }
        }
    }
}
