/// Linear polarization states used by the B92 transmitter and analyzers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    /// Vertical, 90 degrees. Alice's state for a `1`.
    V,
    /// +45 degrees. Alice's state for a `0`.
    P45,
    /// Horizontal, 0 degrees. Bob's analyzer that reveals `0`s.
    H,
    /// -45 degrees. Bob's analyzer that reveals `1`s.
    M45,
}

impl Polarization {
    pub const ALL: [Polarization; 4] = [
        Polarization::V,
        Polarization::P45,
        Polarization::H,
        Polarization::M45,
    ];

    /// Angle in degrees measured from horizontal.
    pub fn angle_deg(self) -> f64 {
        match self {
            Polarization::V => 90.0,
            Polarization::P45 => 45.0,
            Polarization::H => 0.0,
            Polarization::M45 => -45.0,
        }
    }

    /// The state Alice prepares for `bit`.
    pub fn for_bit(bit: bool) -> Self {
        if bit {
            Polarization::V
        } else {
            Polarization::P45
        }
    }

    /// The analyzer whose firing Bob reads as `bit`.
    pub fn analyzer_for_bit(bit: bool) -> Self {
        if bit {
            Polarization::M45
        } else {
            Polarization::H
        }
    }
}

/// Probability that a photon in `sent` passes an analyzer set to `analyzer`: cos^2 of the angle between them.
pub fn overlap_probability(sent: Polarization, analyzer: Polarization) -> f64 {
    let delta = sent.angle_deg() - analyzer.angle_deg();
    // exact values for the multiples of 45 degrees we actually use
    match (delta.rem_euclid(180.0) / 45.0).round() as i64 {
        0 | 4 => 1.0,
        2 => 0.0,
        1 | 3 => 0.5,
        _ => delta.to_radians().cos().powi(2),
    }
}
