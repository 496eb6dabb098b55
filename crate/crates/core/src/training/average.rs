use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

/// Elementwise mean of parameter sets with identical names and shapes.
pub fn average_checkpoints(checkpoints: &[ParamStore]) -> Result<ParamStore> {
    let first = checkpoints
        .first()
        .ok_or_else(|| Error::InvalidInput("no checkpoints to average".into()))?;
    for (k, other) in checkpoints.iter().enumerate().skip(1) {
        if other.len() != first.len() {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint {k} has {} parameters, expected {}",
                other.len(),
                first.len()
            )));
        }
        for (name, t) in first.iter() {
            let o = other
                .id(name)
                .map(|id| other.get(id))
                .ok_or_else(|| Error::CheckpointMismatch(format!("checkpoint {k} lacks {name}")))?;
            if o.shape() != t.shape() {
                return Err(Error::CheckpointMismatch(format!(
                    "{name}: shape {:?} in checkpoint {k}, expected {:?}",
                    o.shape(),
                    t.shape()
                )));
            }
        }
    }
    let k = checkpoints.len() as f64;
    let mut out = first.clone();
    for id in first.ids() {
        let name = first.name(id);
        // offsets from the first checkpoint, so identical inputs average to
        // themselves bit for bit
        let base = first.get(id).data();
        let mut delta = vec![0.0; base.len()];
        for c in &checkpoints[1..] {
            let t = c.get(c.id(name).unwrap());
            for ((d, &x), &b) in delta.iter_mut().zip(t.data()).zip(base) {
                *d += x - b;
            }
        }
        let mean = base.iter().zip(&delta).map(|(&b, &d)| b + d / k).collect();
        out.set(id, Tensor::new(first.get(id).shape().to_vec(), mean)?)?;
    }
    Ok(out)
}
