use super::integrate;

fn ln_fact(j: usize) -> f64 {
    (1..=j).map(|k| (k as f64).ln()).sum()
}

fn integrand(y: f64, j: usize) -> f64 {
    if y <= 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    (y + j as f64 * y.ln() - ln_fact(j)).exp()
}

pub fn g_by_quadrature(x: f64, j: usize) -> f64 {
    integrate(|y| integrand(y, j), 0.0, x, 1e-14, 0.0)
}

// Cauchy's formula for the repeated integral
pub fn g_bar_by_quadrature(x: f64, j: usize) -> f64 {
    integrate(|y| (x - y) * integrand(y, j), 0.0, x, 1e-14, 0.0)
}
