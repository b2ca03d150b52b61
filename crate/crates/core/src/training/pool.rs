use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::compute::tensor::Tensor4;
use crate::error::Result;

/// History of generated images for discriminator updates.
///
/// Until full, every image is stored and returned. Afterwards each image is,
/// with probability one half, swapped for a random stored one (which is
/// returned instead) or passed through unchanged.
pub struct ImagePool {
    capacity: usize,
    images: Vec<Tensor4>,
    rng: ChaCha8Rng,
}

impl ImagePool {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Self {
        ImagePool {
            capacity,
            images: Vec::with_capacity(capacity),
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Process a batch item by item.
    pub fn query(&mut self, batch: &Tensor4) -> Result<Tensor4> {
        if self.capacity == 0 {
            return Ok(batch.clone());
        }
        let mut out = Vec::with_capacity(batch.shape().n);
        for n in 0..batch.shape().n {
            let item = batch.item(n);
            if self.images.len() < self.capacity {
                self.images.push(item.clone());
                out.push(item);
            } else if self.rng.gen_bool(0.5) {
                let i = self.rng.gen_range(0..self.images.len());
                out.push(std::mem::replace(&mut self.images[i], item));
            } else {
                out.push(item);
            }
        }
        Tensor4::stack(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::tensor::Shape4;
    use rand::SeedableRng;

    fn img(v: f32) -> Tensor4 {
        Tensor4::filled(Shape4::new(1, 1, 2, 2), v).unwrap()
    }

    #[test]
    fn fills_then_mixes() {
        let mut pool = ImagePool::new(3, ChaCha8Rng::seed_from_u64(0));
        for i in 0..3 {
            assert_eq!(pool.query(&img(i as f32)).unwrap(), img(i as f32));
        }
        assert_eq!(pool.len(), 3);
        let outs: Vec<f32> = (3..40).map(|i| pool.query(&img(i as f32)).unwrap().data()[0]).collect();
        assert!(outs.iter().enumerate().any(|(k, &v)| v != (k + 3) as f32));
        assert_eq!(pool.len(), 3);
    }

    #[test]
    fn disabled_pool_passes_through() {
        let mut pool = ImagePool::new(0, ChaCha8Rng::seed_from_u64(0));
        assert_eq!(pool.query(&img(5.0)).unwrap(), img(5.0));
        assert!(pool.is_empty());
    }
}
