//! Class-balanced train/test splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{RhythmClass, Window};

/// Draws exactly `per_class` windows of every class (without replacement,
/// seeded) into the training set; everything else becomes the test set.
/// Deterministic for a fixed seed.
pub fn balance_classes(
    windows: Vec<Window>,
    per_class: usize,
    seed: u64,
) -> Result<(Vec<Window>, Vec<Window>)> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); RhythmClass::COUNT];
    for (i, w) in windows.iter().enumerate() {
        by_class[w.label.index()].push(i);
    }
    for class in RhythmClass::ALL {
        let have = by_class[class.index()].len();
        if have < per_class {
            return Err(Error::InsufficientData {
                class: class.name(),
                have,
                need: per_class,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_marks = vec![false; windows.len()];
    for indices in &mut by_class {
        indices.shuffle(&mut rng);
        for &i in indices.iter().take(per_class) {
            train_marks[i] = true;
        }
    }
    let mut train = Vec::with_capacity(per_class * RhythmClass::COUNT);
    let mut test = Vec::with_capacity(windows.len() - train.capacity().min(windows.len()));
    for (i, w) in windows.into_iter().enumerate() {
        if train_marks[i] {
            train.push(w);
        } else {
            test.push(w);
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::WindowSource;

    fn window(label: RhythmClass, tag: usize) -> Window {
        Window {
            samples: vec![tag as f64; 4],
            label,
            source: WindowSource {
                record: format!("r{tag}"),
                center: tag,
            },
        }
    }

    fn uniform_pool(per_class: usize) -> Vec<Window> {
        let mut pool = Vec::new();
        let mut tag = 0;
        for class in RhythmClass::ALL {
            for _ in 0..per_class {
                pool.push(window(class, tag));
                tag += 1;
            }
        }
        pool
    }

    #[test]
    fn train_histogram_is_exactly_uniform() {
        let pool = uniform_pool(10);
        let (train, test) = balance_classes(pool, 6, 3).unwrap();
        assert_eq!(train.len(), 48);
        assert_eq!(test.len(), 32);
        for class in RhythmClass::ALL {
            assert_eq!(train.iter().filter(|w| w.label == class).count(), 6);
            assert_eq!(test.iter().filter(|w| w.label == class).count(), 4);
        }
    }

    #[test]
    fn single_window_per_class_leaves_empty_test() {
        let pool = uniform_pool(1);
        let (train, test) = balance_classes(pool, 1, 0).unwrap();
        assert_eq!(train.len(), 8);
        assert!(test.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_partitions() {
        let (t1, s1) = balance_classes(uniform_pool(9), 5, 77).unwrap();
        let (t2, s2) = balance_classes(uniform_pool(9), 5, 77).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(s1, s2);
        let (t3, _) = balance_classes(uniform_pool(9), 5, 78).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn insufficient_class_is_named() {
        let mut pool = uniform_pool(3);
        pool.retain(|w| w.label != RhythmClass::Svta);
        match balance_classes(pool, 2, 0) {
            Err(Error::InsufficientData { class, have, need }) => {
                assert_eq!(class, "SVTA");
                assert_eq!(have, 0);
                assert_eq!(need, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
