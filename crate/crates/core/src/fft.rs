//! Real-input discrete Fourier transforms over channel-interleaved blocks.
//!
//! A length-`L`, `C`-channel real signal is stored row-major as `[L * C]`
//! (time index major, channel index minor), matching the tensor layout used
//! by the rest of the crate. The forward transform is unnormalized; the
//! inverse applies the `1/L` factor. Power-of-two lengths run through an
//! iterative radix-2 kernel; everything else goes through the Bluestein
//! chirp-z reduction onto a padded power-of-two convolution.

use crate::error::{Error, Result};

/// Packed one-sided spectrum of a real signal: `L/2 + 1` frequency bins per
/// channel. The missing upper half is implied by conjugate symmetry.
#[derive(Debug, Clone)]
pub struct ComplexSpectrum {
    bins: usize,
    channels: usize,
    signal_len: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexSpectrum {
    /// Number of retained frequency bins (`L/2 + 1`).
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Length of the time-domain signal this spectrum came from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Complex value at (frequency bin, channel).
    pub fn at(&self, bin: usize, channel: usize) -> (f64, f64) {
        let i = bin * self.channels + channel;
        (self.re[i], self.im[i])
    }
}

/// Forward transform of a real `[len * channels]` block. Unnormalized: the
/// DC bin of a constant signal `c` holds `len * c`.
pub fn rfft(x: &[f64], len: usize, channels: usize) -> Result<ComplexSpectrum> {
    if len == 0 || channels == 0 {
        return Err(Error::Fft("rfft requires len >= 1 and channels >= 1".into()));
    }
    if x.len() != len * channels {
        return Err(Error::Fft(format!(
            "rfft: buffer holds {} values, expected {} ({} x {})",
            x.len(),
            len * channels,
            len,
            channels
        )));
    }
    let bins = len / 2 + 1;
    let mut out = ComplexSpectrum {
        bins,
        channels,
        signal_len: len,
        re: vec![0.0; bins * channels],
        im: vec![0.0; bins * channels],
    };
    let mut re = vec![0.0; len];
    let mut im = vec![0.0; len];
    for ch in 0..channels {
        for i in 0..len {
            re[i] = x[i * channels + ch];
            im[i] = 0.0;
        }
        fft_in_place(&mut re, &mut im, false);
        for bin in 0..bins {
            out.re[bin * channels + ch] = re[bin];
            out.im[bin * channels + ch] = im[bin];
        }
    }
    Ok(out)
}

/// Inverse transform back to a real `[len * channels]` block, applying the
/// `1/len` normalization. `len` must match the spectrum's signal length.
pub fn irfft(spec: &ComplexSpectrum, len: usize) -> Result<Vec<f64>> {
    if len != spec.signal_len {
        return Err(Error::Fft(format!(
            "irfft: requested len {} but spectrum was built from len {}",
            len, spec.signal_len
        )));
    }
    let channels = spec.channels;
    let mut out = vec![0.0; len * channels];
    let mut re = vec![0.0; len];
    let mut im = vec![0.0; len];
    for ch in 0..channels {
        // Rebuild the full spectrum from the packed half via conjugate symmetry.
        for bin in 0..spec.bins {
            re[bin] = spec.re[bin * channels + ch];
            im[bin] = spec.im[bin * channels + ch];
        }
        for bin in spec.bins..len {
            let mirror = len - bin;
            re[bin] = spec.re[mirror * channels + ch];
            im[bin] = -spec.im[mirror * channels + ch];
        }
        fft_in_place(&mut re, &mut im, true);
        let scale = 1.0 / len as f64;
        for i in 0..len {
            out[i * channels + ch] = re[i] * scale;
        }
    }
    Ok(out)
}

/// Per-bin product `a[f] * conj(b[f])` summed over channels, yielding a
/// single-channel spectrum. This is the frequency-domain form of circular
/// cross-correlation accumulated across channels.
pub fn conj_product_sum(a: &ComplexSpectrum, b: &ComplexSpectrum) -> Result<ComplexSpectrum> {
    if a.bins != b.bins || a.channels != b.channels || a.signal_len != b.signal_len {
        return Err(Error::Fft(format!(
            "conj_product_sum: spectra disagree ({}x{} over len {} vs {}x{} over len {})",
            a.bins, a.channels, a.signal_len, b.bins, b.channels, b.signal_len
        )));
    }
    let mut out = ComplexSpectrum {
        bins: a.bins,
        channels: 1,
        signal_len: a.signal_len,
        re: vec![0.0; a.bins],
        im: vec![0.0; a.bins],
    };
    for bin in 0..a.bins {
        let mut acc_re = 0.0;
        let mut acc_im = 0.0;
        for ch in 0..a.channels {
            let (ar, ai) = a.at(bin, ch);
            let (br, bi) = b.at(bin, ch);
            // a * conj(b)
            acc_re += ar * br + ai * bi;
            acc_im += ai * br - ar * bi;
        }
        out.re[bin] = acc_re;
        out.im[bin] = acc_im;
    }
    Ok(out)
}

/// Per-bin product of a single-channel spectrum `a` against every channel of
/// `b`: `out[f, ch] = a[f] * b[f, ch]` (with `a` conjugated first when
/// `conj_a` is set). Used by the correlation backward pass.
pub fn broadcast_product(
    a: &ComplexSpectrum,
    b: &ComplexSpectrum,
    conj_a: bool,
) -> Result<ComplexSpectrum> {
    if a.channels != 1 || a.bins != b.bins || a.signal_len != b.signal_len {
        return Err(Error::Fft(format!(
            "broadcast_product: need single-channel lhs matching rhs bins ({} ch, {} vs {} bins)",
            a.channels, a.bins, b.bins
        )));
    }
    let mut out = ComplexSpectrum {
        bins: b.bins,
        channels: b.channels,
        signal_len: b.signal_len,
        re: vec![0.0; b.bins * b.channels],
        im: vec![0.0; b.bins * b.channels],
    };
    for bin in 0..b.bins {
        let (ar, mut ai) = a.at(bin, 0);
        if conj_a {
            ai = -ai;
        }
        for ch in 0..b.channels {
            let (br, bi) = b.at(bin, ch);
            let i = bin * b.channels + ch;
            out.re[i] = ar * br - ai * bi;
            out.im[i] = ar * bi + ai * br;
        }
    }
    Ok(out)
}

/// In-place complex transform of a single channel. Dispatches to radix-2 for
/// power-of-two lengths and to Bluestein otherwise. No normalization either
/// direction; callers scale.
fn fft_in_place(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        fft_radix2(re, im, inverse);
    } else {
        fft_bluestein(re, im, inverse);
    }
}

/// Iterative radix-2 Cooley-Tukey with bit-reversal reordering.
fn fft_radix2(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());

    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let step = sign * std::f64::consts::TAU / len as f64;
        let half = len / 2;
        let mut start = 0;
        while start < n {
            for k in 0..half {
                // Per-butterfly twiddle from sin/cos rather than a running
                // product; keeps error flat across stages.
                let ang = step * k as f64;
                let (wi, wr) = ang.sin_cos();
                let a = start + k;
                let b = a + half;
                let vr = re[b] * wr - im[b] * wi;
                let vi = re[b] * wi + im[b] * wr;
                re[b] = re[a] - vr;
                im[b] = im[a] - vi;
                re[a] += vr;
                im[a] += vi;
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Bluestein chirp-z: rewrites an arbitrary-length DFT as a circular
/// convolution of chirp-modulated sequences, carried out on a padded
/// power-of-two grid.
fn fft_bluestein(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let m = (2 * n - 1).next_power_of_two();

    // Chirp u[k] = exp(sign * i * pi * k^2 / n). Reduce k^2 mod 2n so the
    // angle stays small regardless of n.
    let mut chirp_re = vec![0.0; n];
    let mut chirp_im = vec![0.0; n];
    for k in 0..n {
        let sq = (k as u64 * k as u64) % (2 * n as u64);
        let ang = sign * std::f64::consts::PI * sq as f64 / n as f64;
        chirp_re[k] = ang.cos();
        chirp_im[k] = ang.sin();
    }

    // a = x * chirp, zero-padded to m.
    let mut a_re = vec![0.0; m];
    let mut a_im = vec![0.0; m];
    for k in 0..n {
        a_re[k] = re[k] * chirp_re[k] - im[k] * chirp_im[k];
        a_im[k] = re[k] * chirp_im[k] + im[k] * chirp_re[k];
    }

    // b = conj(chirp) laid out circularly at offsets 0..n-1 and m-(n-1)..m.
    let mut b_re = vec![0.0; m];
    let mut b_im = vec![0.0; m];
    b_re[0] = chirp_re[0];
    b_im[0] = -chirp_im[0];
    for k in 1..n {
        b_re[k] = chirp_re[k];
        b_im[k] = -chirp_im[k];
        b_re[m - k] = chirp_re[k];
        b_im[m - k] = -chirp_im[k];
    }

    fft_radix2(&mut a_re, &mut a_im, false);
    fft_radix2(&mut b_re, &mut b_im, false);
    for i in 0..m {
        let r = a_re[i] * b_re[i] - a_im[i] * b_im[i];
        let ii = a_re[i] * b_im[i] + a_im[i] * b_re[i];
        a_re[i] = r;
        a_im[i] = ii;
    }
    fft_radix2(&mut a_re, &mut a_im, true);
    let scale = 1.0 / m as f64;

    for k in 0..n {
        let cr = a_re[k] * scale;
        let ci = a_im[k] * scale;
        re[k] = cr * chirp_re[k] - ci * chirp_im[k];
        im[k] = cr * chirp_im[k] + ci * chirp_re[k];
    }
}
