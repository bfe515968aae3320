/// Degree-11 odd polynomial nonlinearity of the ACY natural-gradient rule.
pub fn acy_activation(y: f64) -> f64 {
    let y2 = y * y;
    // Horner in y² on the odd polynomial
    let p = (((0.75 * y2 + 25.0 / 4.0) * y2 - 14.0 / 3.0) * y2 - 47.0 / 4.0) * y2 + 29.0 / 4.0;
    p * y2 * y
}

/// FastICA contrast derivative `g(y) = y exp(-y²/2)`.
pub fn fastica_g(y: f64) -> f64 {
    y * (-0.5 * y * y).exp()
}

/// `g'(y) = (1 - y²) exp(-y²/2)`.
pub fn fastica_gprime(y: f64) -> f64 {
    let y2 = y * y;
    (1.0 - y2) * (-0.5 * y2).exp()
}
