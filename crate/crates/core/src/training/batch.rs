use rand::seq::SliceRandom;
use rand::Rng;

/// Groups example indices into batches of roughly `budget` tokens. Examples
/// are shuffled, stably sorted by length so that similar lengths share a
/// batch, cut greedily, and the batch order is shuffled. An example larger
/// than the budget gets a batch of its own; no example is ever split.
pub fn make_batches<R: Rng + ?Sized>(lengths: &[usize], budget: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches = Vec::new();
    let mut cur = Vec::new();
    let mut tokens = 0;
    for i in order {
        if !cur.is_empty() && tokens + lengths[i] > budget {
            batches.push(std::mem::take(&mut cur));
            tokens = 0;
        }
        cur.push(i);
        tokens += lengths[i];
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches.shuffle(rng);
    batches
}
