/// Central-difference gradient of `f` at `point`.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(mut f: F, point: &[f64], h: f64) -> Vec<f64> {
    let mut p = point.to_vec();
    (0..point.len())
        .map(|k| {
            p[k] = point[k] + h;
            let up = f(&p);
            p[k] = point[k] - h;
            let down = f(&p);
            p[k] = point[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}
