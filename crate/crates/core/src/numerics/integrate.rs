//! Globally adaptive Gauss–Kronrod (7/15) integration on a finite interval.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const MAX_INTERVALS: usize = 4000;

#[derive(Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Piece { a, b, value: kron * half, error: ((kron - gauss) * half).abs() }
}

/// `int_lo^hi f(x) dx` to an estimated absolute error of `tol`.
pub fn integrate_1d(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::param(format!("invalid integration range [{lo}, {hi}] or tolerance {tol}")));
    }
    if lo == hi {
        return Ok(0.0);
    }
    if lo > hi {
        return integrate_1d(f, hi, lo, tol).map(|v| -v);
    }
    let mut pieces = vec![kronrod(&mut f, lo, hi)];
    loop {
        let value: f64 = pieces.iter().map(|p| p.value).sum();
        let error: f64 = pieces.iter().map(|p| p.error).sum();
        if !value.is_finite() {
            return Err(Error::Numerical { message: "integrand is not finite".into(), partial: None, sample: None });
        }
        if error <= tol {
            return Ok(value);
        }
        let (worst, _) =
            pieces.iter().enumerate().max_by(|x, y| x.1.error.total_cmp(&y.1.error)).expect("at least one piece");
        let p = pieces[worst];
        let mid = 0.5 * (p.a + p.b);
        let too_narrow = mid <= p.a || mid >= p.b || (p.b - p.a) < 4.0 * f64::EPSILON * p.b.abs().max(p.a.abs());
        if pieces.len() >= MAX_INTERVALS || too_narrow {
            return Err(Error::Numerical {
                message: format!("adaptive quadrature did not reach tolerance {tol} (estimate {error:e})"),
                partial: Some(value),
                sample: None,
            });
        }
        pieces[worst] = kronrod(&mut f, p.a, mid);
        pieces.push(kronrod(&mut f, mid, p.b));
    }
}
