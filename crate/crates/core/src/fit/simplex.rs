//! Downhill simplex (Nelder–Mead) minimization.

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMinimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimize `f` from `start`, with initial edge lengths `steps` along each
/// axis. Stops when the simplex's relative size falls to `tolerance` or the
/// evaluation budget is spent. Non-finite objective values are treated as
/// `+inf`.
pub fn nelder_mead<F>(
    mut f: F,
    start: &[f64],
    steps: &[f64],
    tolerance: f64,
    max_evaluations: usize,
) -> SimplexMinimum
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    assert_eq!(dim, steps.len(), "one step per coordinate");
    let evaluations = std::cell::Cell::new(0usize);
    let mut eval = |x: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    vertices.push(start.to_vec());
    for (i, step) in steps.iter().enumerate() {
        let mut v = start.to_vec();
        v[i] += step;
        vertices.push(v);
    }
    let mut values: Vec<f64> = vertices.iter().map(|v| eval(v)).collect();

    let converged = loop {
        order(&mut vertices, &mut values);
        if relative_size(&vertices) <= tolerance {
            break true;
        }
        if evaluations.get() >= max_evaluations {
            break false;
        }

        let worst = dim;
        let centroid: Vec<f64> = (0..dim)
            .map(|j| vertices[..worst].iter().map(|v| v[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&vertices[worst])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflected = along(REFLECT);
        let f_reflected = eval(&reflected);
        if f_reflected < values[0] {
            let expanded = along(EXPAND);
            let f_expanded = eval(&expanded);
            if f_expanded < f_reflected {
                vertices[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                vertices[worst] = reflected;
                values[worst] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[worst - 1] {
            vertices[worst] = reflected;
            values[worst] = f_reflected;
            continue;
        }

        let (contracted, f_contracted) = if f_reflected < values[worst] {
            let c = along(CONTRACT * REFLECT);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = along(-CONTRACT);
            let fc = eval(&c);
            (c, fc)
        };
        if f_contracted < values[worst].min(f_reflected) {
            vertices[worst] = contracted;
            values[worst] = f_contracted;
            continue;
        }

        let best = vertices[0].clone();
        for i in 1..=dim {
            for (x, b) in vertices[i].iter_mut().zip(&best) {
                *x = b + SHRINK * (*x - b);
            }
            values[i] = eval(&vertices[i]);
        }
    };

    SimplexMinimum {
        point: vertices.swap_remove(0),
        value: values[0],
        evaluations: evaluations.get(),
        converged,
    }
}

fn order(vertices: &mut Vec<Vec<f64>>, values: &mut Vec<f64>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // stable: ties keep their current order
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    *vertices = idx.iter().map(|&i| vertices[i].clone()).collect();
    *values = idx.iter().map(|&i| values[i]).collect();
}

/// Largest coordinate offset from the best vertex, relative to that
/// coordinate's magnitude (floored at 1).
fn relative_size(vertices: &[Vec<f64>]) -> f64 {
    let best = &vertices[0];
    vertices[1..]
        .iter()
        .flat_map(|v| {
            v.iter()
                .zip(best)
                .map(|(x, b)| (x - b).abs() / b.abs().max(1.0))
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], &[0.5, 0.5], 1e-10, 10_000);
        assert!(m.converged);
        assert!((m.point[0] - 1.0).abs() < 1e-6, "{:?}", m.point);
        assert!((m.point[1] - 1.0).abs() < 1e-6, "{:?}", m.point);
    }

    #[test]
    fn quadratic_bowl_in_three_dimensions() {
        let bowl =
            |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 0.5 * x[2] * x[2];
        let m = nelder_mead(bowl, &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 1e-9, 10_000);
        assert!(m.converged);
        assert!(m.value < 1e-14);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], &[0.5, 0.5], 1e-12, 20);
        assert!(!m.converged);
        assert!(m.evaluations >= 20);
    }

    #[test]
    fn nan_regions_are_avoided() {
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 2.0).powi(2)
            }
        };
        let m = nelder_mead(f, &[0.5], &[0.25], 1e-10, 1000);
        assert!((m.point[0] - 2.0).abs() < 1e-6);
    }
}
