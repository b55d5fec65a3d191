//! Reference tones, primary noise and acoustic path responses.
//!
//! Frequencies are normalized (cycles/sample) and must lie strictly inside
//! `(0, 0.5)`. Angular frequencies are always `2π f`. Phases are stored in
//! radians reduced to `(-π, π]`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{check_index, Error, Result};

/// Smallest `|z|` at which a path response may be evaluated.
pub const MIN_PATH_RADIUS: f64 = 0.05;

/// Angular tolerance used to match a gain-table query to one of its control
/// frequencies. Wide enough to cover the two-sided control-frequency limit.
pub const GAIN_TABLE_MATCH_TOL: f64 = 1e-4;

/// Reduce an angle to `(-π, π]`. Values already in range are returned as-is.
pub fn wrap_phase(phase: f64) -> f64 {
    if phase > -PI && phase <= PI {
        return phase;
    }
    let r = (phase + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// A tone frequency in cycles/sample.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ToneSpec {
    freq: f64,
}

impl ToneSpec {
    pub fn new(freq: f64) -> Result<Self> {
        if freq > 0.0 && freq < 0.5 {
            Ok(Self { freq })
        } else {
            Err(Error::InvalidArgument(format!(
                "tone frequency {freq} outside (0, 0.5)"
            )))
        }
    }

    /// Skips the range check so a loader can report it alongside other problems.
    pub(crate) fn unchecked(freq: f64) -> Self {
        Self { freq }
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    pub fn omega(&self) -> f64 {
        TAU * self.freq
    }

    /// `e^{iω}`, the point on the unit circle for this tone.
    pub fn unit_point(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.omega())
    }
}

/// One reference oscillator: `A cos(ωn + φ)` and its quadrature `A sin(ωn + φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTone {
    pub tone: ToneSpec,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub tones: Vec<ReferenceTone>,
}

impl ReferenceSpec {
    /// Unit amplitude, zero phase reference at each frequency.
    pub fn unit(freqs: &[ToneSpec]) -> Self {
        Self {
            tones: freqs
                .iter()
                .map(|&tone| ReferenceTone {
                    tone,
                    amplitude: 1.0,
                    phase: 0.0,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tones.is_empty()
    }

    pub fn tone(&self, l: usize) -> Result<&ReferenceTone> {
        check_index("tone", l, self.tones.len())?;
        Ok(&self.tones[l])
    }

    /// Complex reference `A e^{i(ωn + φ)}`; real part is `x`, imaginary part `x̂`.
    pub(crate) fn phasor(&self, l: usize, n: u64) -> Complex64 {
        let t = &self.tones[l];
        let arg = t.tone.omega() * n as f64 + t.phase;
        Complex64::new(t.amplitude * arg.cos(), t.amplitude * arg.sin())
    }
}

/// In-phase and quadrature reference samples for tone `l` at sample `n`.
pub fn tone_pair(l: usize, n: u64, reference: &ReferenceSpec) -> Result<(f64, f64)> {
    reference.tone(l)?;
    let p = reference.phasor(l, n);
    Ok((p.re, p.im))
}

/// Noise present at the sensors: a `K x T` table of tone amplitudes and
/// phases. The first `L` columns are the controlled tones; extra columns are
/// probe tones that the equalizer has no reference for.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    pub tones: Vec<ToneSpec>,
    /// `amplitude[k][t]`
    pub amplitude: Vec<Vec<f64>>,
    /// `phase[k][t]`
    pub phase: Vec<Vec<f64>>,
}

impl NoiseField {
    pub fn sensors(&self) -> usize {
        self.amplitude.len()
    }

    /// Append a tone that is present in every sensor's noise.
    pub fn with_probe(mut self, tone: ToneSpec, amplitude: &[f64], phase: &[f64]) -> Self {
        self.tones.push(tone);
        for (k, row) in self.amplitude.iter_mut().enumerate() {
            row.push(amplitude[k]);
        }
        for (k, row) in self.phase.iter_mut().enumerate() {
            row.push(wrap_phase(phase[k]));
        }
        self
    }
}

/// `d_k(n) = Σ_t A_kt cos(ω_t n + φ_kt)`.
pub fn primary_noise(k: usize, n: u64, noise: &NoiseField) -> Result<f64> {
    check_index("sensor", k, noise.sensors())?;
    Ok(noise_sample(k, n, noise))
}

pub(crate) fn noise_sample(k: usize, n: u64, noise: &NoiseField) -> f64 {
    let nf = n as f64;
    noise
        .tones
        .iter()
        .zip(&noise.amplitude[k])
        .zip(&noise.phase[k])
        .map(|((tone, a), ph)| a * (tone.omega() * nf + ph).cos())
        .sum()
}

/// Gain of a path at one control frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneGain {
    pub freq: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// An acoustic path `C_jk`, `C̃_jk` or `P_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum PathResponse {
    /// Real impulse response `c_0, c_1, ...`; evaluable anywhere in the z-plane.
    Fir(Vec<f64>),
    /// Complex gains known only at the control frequencies.
    GainTable(Vec<ToneGain>),
}

impl PathResponse {
    pub fn identity() -> Self {
        PathResponse::Fir(vec![1.0])
    }

    pub fn is_fir(&self) -> bool {
        matches!(self, PathResponse::Fir(_))
    }

    /// Complex gain of the path at `z`.
    pub fn gain(&self, z: Complex64) -> Result<Complex64> {
        let modulus = z.norm();
        // relative slack absorbs rounding in polar construction of the floor radius
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(modulus >= MIN_PATH_RADIUS * (1.0 - 1e-12)) {
            return Err(Error::RadiusTooSmall { modulus });
        }
        match self {
            PathResponse::Fir(taps) => {
                // Horner in z^{-1}
                let w = z.inv();
                Ok(taps
                    .iter()
                    .rev()
                    .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * w + c))
            }
            PathResponse::GainTable(entries) => {
                if (modulus - 1.0).abs() > 1e-9 {
                    return Err(Error::OffControlFrequency { z });
                }
                let angle = z.arg();
                for e in entries {
                    let omega = TAU * e.freq;
                    let g = Complex64::from_polar(e.amplitude, e.phase);
                    if (angle - omega).abs() <= GAIN_TABLE_MATCH_TOL {
                        return Ok(g);
                    }
                    if (angle + omega).abs() <= GAIN_TABLE_MATCH_TOL {
                        return Ok(g.conj());
                    }
                }
                Err(Error::OffControlFrequency { z })
            }
        }
    }
}

/// Free-function form of [`PathResponse::gain`].
pub fn path_gain(path: &PathResponse, z: Complex64) -> Result<Complex64> {
    path.gain(z)
}

/// True and estimated secondary paths, both indexed `[j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    pub true_paths: Vec<Vec<PathResponse>>,
    /// `None` when estimates are perfect.
    pub estimated: Option<Vec<Vec<PathResponse>>>,
}

impl PathMatrix {
    pub fn perfect(true_paths: Vec<Vec<PathResponse>>) -> Self {
        Self {
            true_paths,
            estimated: None,
        }
    }

    pub fn perfect_estimates(&self) -> bool {
        self.estimated.is_none()
    }

    pub fn actuators(&self) -> usize {
        self.true_paths.len()
    }

    pub fn sensors(&self) -> usize {
        self.true_paths.first().map_or(0, Vec::len)
    }

    pub fn true_path(&self, j: usize, k: usize) -> &PathResponse {
        &self.true_paths[j][k]
    }

    pub fn estimate(&self, j: usize, k: usize) -> &PathResponse {
        match &self.estimated {
            Some(est) => &est[j][k],
            None => &self.true_paths[j][k],
        }
    }
}

/// Reference of tone `l` filtered by the estimated path `C̃_jk` at `ω_l`:
/// `(Ã A_ref cos(ω_l n + φ_ref + φ̃), Ã A_ref sin(ω_l n + φ_ref + φ̃))`.
pub fn filtered_reference(
    l: usize,
    j: usize,
    k: usize,
    n: u64,
    paths: &PathMatrix,
    reference: &ReferenceSpec,
) -> Result<[f64; 2]> {
    let tone = reference.tone(l)?;
    check_index("actuator", j, paths.actuators())?;
    check_index("sensor", k, paths.sensors())?;
    let g = paths.estimate(j, k).gain(tone.tone.unit_point())?;
    let arg = tone.tone.omega() * n as f64 + tone.phase + g.arg();
    let a = g.norm() * tone.amplitude;
    Ok([a * arg.cos(), a * arg.sin()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn reference(freq: f64, amplitude: f64, phase: f64) -> ReferenceSpec {
        ReferenceSpec {
            tones: vec![ReferenceTone {
                tone: ToneSpec::new(freq).unwrap(),
                amplitude,
                phase,
            }],
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn tone_pair_examples() {
        let (x, xh) = tone_pair(0, 0, &reference(0.125, 1.0, 0.0)).unwrap();
        assert!(close(x, 1.0) && close(xh, 0.0));
        let (x, xh) = tone_pair(0, 2, &reference(0.125, 1.0, 0.0)).unwrap();
        assert!(close(x, 0.0) && close(xh, 1.0));
        let (x, xh) = tone_pair(0, 0, &reference(0.125, 2.0, PI)).unwrap();
        assert!(close(x, -2.0) && close(xh, 0.0));
        assert!(tone_pair(1, 0, &reference(0.125, 1.0, 0.0)).is_err());
    }

    #[test]
    fn tone_spec_rejects_dc_and_nyquist() {
        assert!(ToneSpec::new(0.0).is_err());
        assert!(ToneSpec::new(0.5).is_err());
        assert!(ToneSpec::new(f64::NAN).is_err());
        assert!(ToneSpec::new(0.2).is_ok());
    }

    fn noise(freqs: &[f64], amps: &[f64], phases: &[f64]) -> NoiseField {
        NoiseField {
            tones: freqs.iter().map(|&f| ToneSpec::new(f).unwrap()).collect(),
            amplitude: vec![amps.to_vec()],
            phase: vec![phases.to_vec()],
        }
    }

    #[test]
    fn primary_noise_examples() {
        let one = noise(&[0.25], &[1.0], &[0.0]);
        assert!(close(primary_noise(0, 1, &one).unwrap(), 0.0));
        let two = noise(&[0.1, 0.2], &[1.0, 0.5], &[0.0, 0.0]);
        assert!(close(primary_noise(0, 0, &two).unwrap(), 1.5));
        let shifted = noise(&[0.25], &[1.0], &[FRAC_PI_2]);
        assert!(close(primary_noise(0, 0, &shifted).unwrap(), 0.0));
        assert!(primary_noise(1, 0, &one).is_err());
    }

    #[test]
    fn primary_noise_period_eight() {
        let nf = noise(&[0.125, 0.375], &[1.0, 0.3], &[0.2, -1.0]);
        for n in 0..64 {
            let a = primary_noise(0, n, &nf).unwrap();
            let b = primary_noise(0, n + 8, &nf).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn path_gain_examples() {
        let z = Complex64::from_polar(1.0, TAU * 0.25);
        let g = PathResponse::identity().gain(z).unwrap();
        assert!((g - 1.0).norm() < 1e-15);
        let g = PathResponse::Fir(vec![0.0, 1.0]).gain(z).unwrap();
        assert!((g - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        let g = PathResponse::Fir(vec![0.5, 0.5])
            .gain(Complex64::new(1.0, 0.0))
            .unwrap();
        assert!((g - 1.0).norm() < 1e-15);
        assert!(matches!(
            PathResponse::identity().gain(Complex64::new(0.01, 0.0)),
            Err(Error::RadiusTooSmall { .. })
        ));
    }

    #[test]
    fn gain_table_only_at_control_frequencies() {
        let table = PathResponse::GainTable(vec![ToneGain {
            freq: 0.1,
            amplitude: 2.0,
            phase: 0.5,
        }]);
        let at = table.gain(Complex64::from_polar(1.0, TAU * 0.1)).unwrap();
        assert!((at - Complex64::from_polar(2.0, 0.5)).norm() < 1e-15);
        let mirrored = table.gain(Complex64::from_polar(1.0, -TAU * 0.1)).unwrap();
        assert!((mirrored - at.conj()).norm() < 1e-15);
        assert!(matches!(
            table.gain(Complex64::from_polar(1.0, TAU * 0.2)),
            Err(Error::OffControlFrequency { .. })
        ));
        assert!(table.gain(Complex64::from_polar(0.9, TAU * 0.1)).is_err());
    }

    fn paths_1x1(est: PathResponse) -> PathMatrix {
        PathMatrix {
            true_paths: vec![vec![PathResponse::identity()]],
            estimated: Some(vec![vec![est]]),
        }
    }

    #[test]
    fn filtered_reference_examples() {
        let r = reference(0.125, 1.0, 0.0);
        let ident = PathMatrix::perfect(vec![vec![PathResponse::identity()]]);
        for n in 0..10 {
            let [a, b] = filtered_reference(0, 0, 0, n, &ident, &r).unwrap();
            let (x, xh) = tone_pair(0, n, &r).unwrap();
            assert!(close(a, x) && close(b, xh));
        }

        let quarter = paths_1x1(PathResponse::GainTable(vec![ToneGain {
            freq: 0.125,
            amplitude: 2.0,
            phase: FRAC_PI_2,
        }]));
        let [a, b] = filtered_reference(0, 0, 0, 0, &quarter, &r).unwrap();
        assert!(close(a, 0.0) && close(b, 2.0));

        // oracle: unit delay at f = 1/8 has gain e^{-iπ/4}
        let delay = paths_1x1(PathResponse::Fir(vec![0.0, 1.0]));
        let g = Complex64::from_polar(1.0, TAU * 0.125).inv();
        let [a, b] = filtered_reference(0, 0, 0, 0, &delay, &r).unwrap();
        assert!(close(a, g.re) && close(b, g.im));
        assert!(close(a, (-PI / 4.0).cos()) && close(b, (-PI / 4.0).sin()));
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(0.3), 0.3);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(7.0) - (7.0 - TAU)).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quadrature_identity(f in 0.001f64..0.499, a in 0.01f64..10.0, ph in -3.0f64..3.0, n in 0u64..100_000) {
                let r = reference(f, a, ph);
                let (x, xh) = tone_pair(0, n, &r).unwrap();
                prop_assert!((x * x + xh * xh - a * a).abs() <= 1e-12 * a * a);
            }

            #[test]
            fn fir_conjugate_symmetry(taps in proptest::collection::vec(-2.0f64..2.0, 1..6),
                                      r in 0.1f64..2.0, th in -3.1f64..3.1) {
                let p = PathResponse::Fir(taps);
                let z = Complex64::from_polar(r, th);
                let a = p.gain(z.conj()).unwrap();
                let b = p.gain(z).unwrap().conj();
                prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
            }

            #[test]
            fn wrap_phase_lands_in_range(p in -100.0f64..100.0) {
                let w = wrap_phase(p);
                prop_assert!(w > -PI && w <= PI);
                prop_assert!(((w - p) / TAU - ((w - p) / TAU).round()).abs() < 1e-9);
            }
        }
    }
}
