use crate::error::{Error, Result};
use crate::fabric::LayerWeights;
use crate::scalar::Scalar;

/// Distances between the server's units and every client's unit at the
/// same coordinate, for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub layer: usize,
    pub units: usize,
    pub clients: usize,
    /// Row-major `[units × clients]`.
    pub entries: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
}

impl DistanceMatrix {
    pub fn get(&self, unit: usize, client: usize) -> f64 {
        self.entries[unit * self.clients + client]
    }
}

/// Euclidean distance of every client unit (incoming weights and bias) to
/// the server unit with the same index. `mu` and `sigma` are the mean and
/// population standard deviation over all finite entries.
pub fn distance_matrix<S: Scalar>(
    layer: usize,
    server: &LayerWeights<S>,
    clients: &[&LayerWeights<S>],
) -> Result<DistanceMatrix> {
    if let Some(k) = clients.iter().position(|c| !c.same_shape(server)) {
        return Err(Error::shape(
            layer,
            format!("client {k} differs from the server layer"),
        ));
    }
    let units = server.outputs();
    let mut entries = vec![0.0; units * clients.len()];
    for d in 0..units {
        let s = server.neuron_vector(d)?;
        for (k, c) in clients.iter().enumerate() {
            let v = c.neuron_vector(d)?;
            let sq: f64 = s
                .iter()
                .zip(&v)
                .map(|(&a, &b)| (a - b).as_f64().powi(2))
                .sum();
            entries[d * clients.len() + k] = sq.sqrt();
        }
    }
    let finite: Vec<f64> = entries.iter().copied().filter(|e| e.is_finite()).collect();
    let (mu, sigma) = if finite.is_empty() {
        (0.0, 0.0)
    } else {
        let n = finite.len() as f64;
        let mu = finite.iter().sum::<f64>() / n;
        (
            mu,
            (finite.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / n).sqrt(),
        )
    };
    Ok(DistanceMatrix {
        layer,
        units,
        clients: clients.len(),
        entries,
        mu,
        sigma,
    })
}

/// `(β·t + multiplier)·σ + μ`.
pub fn divergence_threshold(round: usize, beta: f64, multiplier: f64, mu: f64, sigma: f64) -> f64 {
    (beta * round as f64 + multiplier) * sigma + mu
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergent {
    /// Position of the client in the matrix columns.
    pub client: usize,
    pub unit: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Selection {
    pub picks: Vec<Divergent>,
    /// Candidates dropped by the cap.
    pub capped: usize,
}

/// Entries strictly above `threshold`, one per unit (the most distant
/// client, lowest position on ties), sorted by descending distance with
/// ties by unit, truncated to `cap`.
pub fn select_divergent(pi: &DistanceMatrix, threshold: f64, cap: usize) -> Selection {
    let mut picks: Vec<Divergent> = (0..pi.units)
        .filter_map(|d| {
            let mut best: Option<Divergent> = None;
            for k in 0..pi.clients {
                let distance = pi.get(d, k);
                if distance > threshold && best.is_none_or(|b| distance > b.distance) {
                    best = Some(Divergent {
                        client: k,
                        unit: d,
                        distance,
                    });
                }
            }
            best
        })
        .collect();
    picks.sort_by(|a, b| b.distance.total_cmp(&a.distance).then(a.unit.cmp(&b.unit)));
    let capped = picks.len().saturating_sub(cap);
    picks.truncate(cap);
    Selection { picks, capped }
}
