//! Screen-quadrant classification of gaze samples and the fixed
//! quadrant → body-site map.
//!
//! Coordinates are normalized to the screen with the origin at the top-left
//! corner and `y` growing downward. A coordinate of exactly `0.5` belongs to
//! the right (or lower) half.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Center of the screen in normalized coordinates.
pub const CENTER: (f64, f64) = (0.5, 0.5);

/// Largest possible distance from the center (a corner).
pub const MAX_CENTER_DISTANCE: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GazeError {
    #[error("gaze sample at {ts_ms} ms is not a valid on-screen point")]
    InvalidSample { ts_ms: u64 },
}

/// One timestamped gaze point from the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub ts_ms: u64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl GazeSample {
    /// A valid sample. Coordinates outside the unit square produce a sample
    /// flagged invalid rather than a panic, since trackers do overshoot.
    pub fn new(ts_ms: u64, x: f64, y: f64) -> Self {
        let valid = (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y);
        Self { ts_ms, x, y, valid }
    }

    /// Tracker dropout: no usable position.
    pub fn dropout(ts_ms: u64) -> Self {
        Self { ts_ms, x: f64::NAN, y: f64::NAN, valid: false }
    }

    /// True when the sample may drive classification.
    pub fn is_usable(&self) -> bool {
        self.valid && (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    fn checked(&self) -> Result<(f64, f64), GazeError> {
        if self.is_usable() {
            Ok((self.x, self.y))
        } else {
            Err(GazeError::InvalidSample { ts_ms: self.ts_ms })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] =
        [Quadrant::UpperLeft, Quadrant::UpperRight, Quadrant::LowerLeft, Quadrant::LowerRight];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BodySite {
    LeftWrist,
    RightWrist,
    LeftAnkle,
    RightAnkle,
}

impl BodySite {
    pub const ALL: [BodySite; 4] =
        [BodySite::LeftWrist, BodySite::RightWrist, BodySite::LeftAnkle, BodySite::RightAnkle];

    /// Two-letter wire code.
    pub fn code(self) -> &'static str {
        match self {
            BodySite::LeftWrist => "LW",
            BodySite::RightWrist => "RW",
            BodySite::LeftAnkle => "LA",
            BodySite::RightAnkle => "RA",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        BodySite::ALL.into_iter().find(|s| s.code() == code)
    }
}

pub fn classify_quadrant(s: &GazeSample) -> Result<Quadrant, GazeError> {
    let (x, y) = s.checked()?;
    Ok(match (x < 0.5, y < 0.5) {
        (true, true) => Quadrant::UpperLeft,
        (false, true) => Quadrant::UpperRight,
        (true, false) => Quadrant::LowerLeft,
        (false, false) => Quadrant::LowerRight,
    })
}

pub fn quadrant_to_body_site(q: Quadrant) -> BodySite {
    match q {
        Quadrant::UpperLeft => BodySite::LeftWrist,
        Quadrant::UpperRight => BodySite::RightWrist,
        Quadrant::LowerLeft => BodySite::LeftAnkle,
        Quadrant::LowerRight => BodySite::RightAnkle,
    }
}

/// Euclidean distance of the sample from the screen center.
pub fn distance_from_center(s: &GazeSample) -> Result<f64, GazeError> {
    let (x, y) = s.checked()?;
    Ok((x - CENTER.0).hypot(y - CENTER.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(x: f64, y: f64) -> GazeSample {
        GazeSample::new(0, x, y)
    }

    #[test]
    fn quadrant_examples() {
        assert_eq!(classify_quadrant(&at(0.2, 0.3)).unwrap(), Quadrant::UpperLeft);
        assert_eq!(classify_quadrant(&at(0.5, 0.5)).unwrap(), Quadrant::LowerRight);
        assert_eq!(classify_quadrant(&at(0.7, 0.2)).unwrap(), Quadrant::UpperRight);
        assert_eq!(classify_quadrant(&at(0.1, 0.9)).unwrap(), Quadrant::LowerLeft);
    }

    #[test]
    fn boundary_goes_right_and_down() {
        assert_eq!(classify_quadrant(&at(0.5, 0.1)).unwrap(), Quadrant::UpperRight);
        assert_eq!(classify_quadrant(&at(0.1, 0.5)).unwrap(), Quadrant::LowerLeft);
        assert_eq!(classify_quadrant(&at(0.0, 0.0)).unwrap(), Quadrant::UpperLeft);
        assert_eq!(classify_quadrant(&at(1.0, 1.0)).unwrap(), Quadrant::LowerRight);
    }

    #[test]
    fn site_map() {
        assert_eq!(quadrant_to_body_site(Quadrant::UpperLeft), BodySite::LeftWrist);
        assert_eq!(quadrant_to_body_site(Quadrant::UpperRight), BodySite::RightWrist);
        assert_eq!(quadrant_to_body_site(Quadrant::LowerLeft), BodySite::LeftAnkle);
        assert_eq!(quadrant_to_body_site(Quadrant::LowerRight), BodySite::RightAnkle);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_from_center(&at(0.5, 0.5)).unwrap(), 0.0);
        assert!((distance_from_center(&at(1.0, 1.0)).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(distance_from_center(&at(0.5, 0.0)).unwrap(), 0.5);
    }

    #[test]
    fn invalid_samples_are_rejected() {
        let drop = GazeSample::dropout(42);
        assert_eq!(classify_quadrant(&drop), Err(GazeError::InvalidSample { ts_ms: 42 }));
        assert!(distance_from_center(&drop).is_err());
        // a sample claiming validity but off-screen is still refused
        let off = GazeSample { ts_ms: 1, x: 1.2, y: 0.3, valid: true };
        assert!(classify_quadrant(&off).is_err());
        assert!(!GazeSample::new(0, -0.01, 0.5).valid);
    }

    #[test]
    fn site_codes_round_trip() {
        for s in BodySite::ALL {
            assert_eq!(BodySite::from_code(s.code()), Some(s));
        }
        assert_eq!(BodySite::from_code("XX"), None);
    }

    fn mirror_lr(s: BodySite) -> BodySite {
        match s {
            BodySite::LeftWrist => BodySite::RightWrist,
            BodySite::RightWrist => BodySite::LeftWrist,
            BodySite::LeftAnkle => BodySite::RightAnkle,
            BodySite::RightAnkle => BodySite::LeftAnkle,
        }
    }

    fn mirror_ud(s: BodySite) -> BodySite {
        match s {
            BodySite::LeftWrist => BodySite::LeftAnkle,
            BodySite::LeftAnkle => BodySite::LeftWrist,
            BodySite::RightWrist => BodySite::RightAnkle,
            BodySite::RightAnkle => BodySite::RightWrist,
        }
    }

    proptest! {
        // Mirroring about 0.5 is exact only off the boundary line.
        #[test]
        fn mirror_symmetry(x in 0.0f64..1.0, y in 0.0f64..1.0) {
            prop_assume!(x != 0.5 && y != 0.5);
            let site = |x, y| quadrant_to_body_site(classify_quadrant(&at(x, y)).unwrap());
            prop_assert_eq!(site(1.0 - x, y), mirror_lr(site(x, y)));
            prop_assert_eq!(site(x, 1.0 - y), mirror_ud(site(x, y)));
        }

        #[test]
        fn distance_dihedral_invariance(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let d = distance_from_center(&at(x, y)).unwrap();
            let images = [
                (x, y), (1.0 - x, y), (x, 1.0 - y), (1.0 - x, 1.0 - y),
                (y, x), (1.0 - y, x), (y, 1.0 - x), (1.0 - y, 1.0 - x),
            ];
            for (u, v) in images {
                let e = distance_from_center(&at(u, v)).unwrap();
                prop_assert!((d - e).abs() < 1e-15);
            }
            prop_assert!(d <= MAX_CENTER_DISTANCE + 1e-15);
        }
    }
}
