use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Dataset, StudentSequence};
use crate::error::{Error, Result};

/// Default share of each student's history used for training.
pub const TRAIN_RATIO: f64 = 0.8;
/// Share of students in each of the frequent / infrequent bands.
pub const GROUP_FRACTION: f64 = 0.2;

/// Per-student chronological split: the first `floor(ratio * len)` events
/// of every sequence go to `train`, the rest to `test`.
pub fn split_per_student(d: &Dataset, ratio: f64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("split ratio", format!("{ratio} is not in (0, 1)")));
    }
    let mut train = Vec::with_capacity(d.sequences.len());
    let mut test = Vec::with_capacity(d.sequences.len());
    for s in &d.sequences {
        let cut = libm::floor(ratio * s.len() as f64) as usize;
        train.push(StudentSequence { student: s.student, events: s.events[..cut].to_vec() });
        test.push(StudentSequence { student: s.student, events: s.events[cut..].to_vec() });
    }
    Ok((
        Dataset { sequences: train, ids: d.ids.clone() },
        Dataset { sequences: test, ids: d.ids.clone() },
    ))
}

/// Training-split practice counts per student and per question.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyStats {
    pub n_u: Vec<u64>,
    pub n_q: Vec<u64>,
}

pub fn frequency_stats(train: &Dataset) -> FrequencyStats {
    let mut n_u = vec![0u64; train.student_count()];
    let mut n_q = vec![0u64; train.question_count()];
    for e in train.events() {
        n_u[e.student as usize] += 1;
        n_q[e.question as usize] += 1;
    }
    FrequencyStats { n_u, n_q }
}

/// Frequent and infrequent student bands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StudentGroups {
    pub frequent: BTreeSet<u32>,
    pub infrequent: BTreeSet<u32>,
}

/// Ranks students by practice count (descending, ties by dense index) and
/// returns the top and bottom `ceil(0.2 * n)` as the frequent and infrequent
/// bands.
pub fn group_students(d: &Dataset) -> Result<StudentGroups> {
    if d.sequences.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut ranked: Vec<(usize, u32)> = d.sequences.iter().map(|s| (s.len(), s.student)).collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let band = libm::ceil(GROUP_FRACTION * ranked.len() as f64) as usize;
    let frequent = ranked[..band].iter().map(|r| r.1).collect();
    let infrequent = ranked[ranked.len() - band..].iter().map(|r| r.1).collect();
    Ok(StudentGroups { frequent, infrequent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RawEvent;
    use alloc::string::ToString;

    fn dataset(lengths: &[usize]) -> Dataset {
        let mut raw = Vec::new();
        for (s, &len) in lengths.iter().enumerate() {
            for t in 0..len {
                raw.push(RawEvent {
                    student: format!("s{s}"),
                    question: format!("q{}", (s + t) % 7),
                    concepts: vec![format!("c{}", t % 3)],
                    correct: (s + t) % 2 == 0,
                    order_index: t as u64,
                });
            }
        }
        Dataset::from_raw(raw).unwrap()
    }

    #[test]
    fn ten_events_split_eight_two() {
        let d = dataset(&[10]);
        let (tr, te) = split_per_student(&d, TRAIN_RATIO).unwrap();
        assert_eq!(tr.sequences[0].len(), 8);
        assert_eq!(te.sequences[0].len(), 2);
    }

    #[test]
    fn three_events_split_two_one() {
        let d = dataset(&[3]);
        let (tr, te) = split_per_student(&d, TRAIN_RATIO).unwrap();
        assert_eq!((tr.sequences[0].len(), te.sequences[0].len()), (2, 1));
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let d = dataset(&[5]);
        for r in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(split_per_student(&d, r), Err(Error::Validation { .. })));
        }
    }

    #[test]
    fn split_then_concat_is_lossless() {
        let d = dataset(&[3, 10, 7, 21, 4]);
        let (tr, te) = split_per_student(&d, 0.8).unwrap();
        assert_eq!(tr.concat(&te).unwrap(), d);
        assert_eq!(tr.event_count() + te.event_count(), d.event_count());
        assert!(te.sequences.iter().all(|s| !s.is_empty()));
    }

    #[test]
    fn frequency_counts() {
        let d = dataset(&[10, 3, 5]);
        let (tr, _) = split_per_student(&d, 0.8).unwrap();
        let st = frequency_stats(&tr);
        assert_eq!(st.n_u[0], 8);
        let total = tr.event_count() as u64;
        assert_eq!(st.n_u.iter().sum::<u64>(), total);
        assert_eq!(st.n_q.iter().sum::<u64>(), total);
    }

    #[test]
    fn unseen_question_counts_zero() {
        let raw = vec![
            ("a", "q1", 0),
            ("a", "q1", 1),
            ("a", "q1", 2),
            ("a", "q2", 3),
        ]
        .into_iter()
        .map(|(s, q, t)| RawEvent {
            student: s.to_string(),
            question: q.to_string(),
            concepts: vec!["c".to_string()],
            correct: true,
            order_index: t,
        });
        let d = Dataset::from_raw(raw).unwrap();
        let (tr, _) = split_per_student(&d, 0.75).unwrap();
        let st = frequency_stats(&tr);
        let q2 = d.ids.questions.get("q2").unwrap();
        assert_eq!(st.n_q[q2 as usize], 0);
    }

    #[test]
    fn grouping_by_rank() {
        let d = dataset(&[10, 9, 8, 7, 6, 5, 4, 3, 11, 12]);
        let g = group_students(&d).unwrap();
        let lens = |set: &BTreeSet<u32>| -> Vec<usize> {
            set.iter().map(|&s| d.sequence_of(s).unwrap().len()).collect()
        };
        let mut f = lens(&g.frequent);
        f.sort();
        let mut i = lens(&g.infrequent);
        i.sort();
        assert_eq!(f, vec![11, 12]);
        assert_eq!(i, vec![3, 4]);
    }

    #[test]
    fn grouping_ties_broken_by_index() {
        let d = dataset(&[5; 10]);
        let g = group_students(&d).unwrap();
        assert_eq!(g.frequent.iter().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(g.infrequent.iter().copied().collect::<Vec<_>>(), vec![8, 9]);
        assert_eq!(group_students(&d).unwrap(), g);
    }

    #[test]
    fn group_sizes_are_ceiling_of_fifth() {
        for n in [1usize, 4, 5, 6, 11, 23] {
            let d = dataset(&vec![4; n]);
            let g = group_students(&d).unwrap();
            let want = libm::ceil(0.2 * n as f64) as usize;
            assert_eq!(g.frequent.len(), want, "n={n}");
            assert_eq!(g.infrequent.len(), want, "n={n}");
        }
    }
}
