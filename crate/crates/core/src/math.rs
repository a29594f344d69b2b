//! Float helpers that work without `std`.

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn trunc(x: f64) -> f64 {
    libm::trunc(x)
}

/// `ln(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` input.
pub(crate) fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.into_iter().map(|x| exp(x - max)).sum();
    max + ln(sum)
}
