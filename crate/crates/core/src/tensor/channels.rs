use super::{Real, Shape, Tensor};
use crate::error::{Error, Result};

/// Stacks tensors along the channel axis, preserving order.
pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or(Error::Empty("concat_channels"))?;
    let mut channels = 0;
    for p in parts {
        if !p.shape().same_spatial(&first.shape()) {
            return Err(Error::shape("concat_channels", first.shape(), p.shape()));
        }
        channels += p.channels();
    }
    let mut data = Vec::with_capacity(channels * first.shape().plane());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(Shape { channels, height: first.height(), width: first.width() }, data)
}

/// Adjoint of [`concat_channels`]: cuts a gradient into parts with the given
/// channel counts.
pub fn split_channels<T: Real>(grad: &Tensor<T>, counts: &[usize]) -> Result<Vec<Tensor<T>>> {
    let total: usize = counts.iter().sum();
    if total != grad.channels() || counts.contains(&0) {
        return Err(Error::invalid(format!(
            "cannot split {} channels into {counts:?}",
            grad.channels()
        )));
    }
    let plane = grad.shape().plane();
    let mut offset = 0;
    counts
        .iter()
        .map(|&n| {
            let slice = &grad.data()[offset * plane..(offset + n) * plane];
            offset += n;
            Tensor::from_vec(Shape { channels: n, height: grad.height(), width: grad.width() }, slice.to_vec())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize, base: f32) -> Tensor<f32> {
        Tensor::from_fn(Shape::new(c, h, w).unwrap(), |c, y, x| base + (c * 100 + y * 10 + x) as f32)
    }

    #[test]
    fn single_part_is_identity() {
        let a = ramp(2, 3, 3, 0.0);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn order_is_preserved() {
        let a = ramp(2, 3, 4, 0.0);
        let b = ramp(3, 3, 4, 1000.0);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.channels(), 5);
        assert_eq!(c.channel(0), a.channel(0));
        assert_eq!(c.channel(1), a.channel(1));
        assert_eq!(c.channel(2), b.channel(0));
    }

    #[test]
    fn spatial_mismatch_is_rejected() {
        let a = ramp(1, 3, 4, 0.0);
        let b = ramp(1, 4, 3, 0.0);
        assert!(concat_channels(&[&a, &b]).is_err());
        assert!(concat_channels::<f32>(&[]).is_err());
    }

    #[test]
    fn split_undoes_concat() {
        let a = ramp(2, 2, 5, 0.0);
        let b = ramp(1, 2, 5, 50.0);
        let parts = split_channels(&concat_channels(&[&a, &b]).unwrap(), &[2, 1]).unwrap();
        assert_eq!(parts, vec![a, b]);
    }
}
