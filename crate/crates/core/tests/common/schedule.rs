use tbje_core::training::Transition;

pub fn code(t: Transition) -> char {
    match t {
        Transition::Improved => 'I',
        Transition::Decayed { .. } => 'D',
        Transition::Stagnant { .. } => 'S',
        Transition::Stop => 'X',
    }
}

/// Scripted validation accuracies and the expected transition codes:
/// I improved, D decayed, S stagnant, X stop.
pub const SCHEDULE_TABLE: &[(&[f64], &str)] = &[
    (&[0.5; 6], "IDDSSX"),
    (&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "IIIIII"),
    (&[0.5, 0.4, 0.3, 0.2, 0.1, 0.0], "IDDSSX"),
    (&[0.5, 0.5, 0.6, 0.6, 0.6, 0.6, 0.6], "IDIDSSX"),
    (&[0.5, 0.4, 0.6, 0.7, 0.7, 0.8, 0.8, 0.8, 0.8], "IDIIDISSX"),
    (&[0.5, 0.5, 0.5, 0.6, 0.6, 0.6, 0.6], "IDDISSX"),
    (&[0.5, 0.5, 0.5, 0.5, 0.6, 0.6, 0.6, 0.6], "IDDSISSX"),
    (&[0.5, 0.5, 0.5, 0.5, 0.5, 0.6, 0.6, 0.6, 0.6], "IDDSSISSX"),
    (&[0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.9], "IDDSSX"),
    (&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0], "IDDSSX"),
    (&[0.7, 0.70000001, 0.7, 0.70000002, 0.7, 0.7, 0.7], "IIDIDSS"),
    (&[0.3, 0.3, 0.4, 0.4, 0.5, 0.5, 0.5, 0.5], "IDIDISSX"),
    (&[0.9, 0.1, 0.95, 0.2, 0.3, 0.96, 0.5, 0.5, 0.5], "IDIDSISSX"),
    (&[0.2, 0.3, 0.3, 0.3, 0.4, 0.4, 0.4, 0.4], "IIDDISSX"),
    (&[0.5, 0.6, 0.7, 0.7, 0.8, 0.8, 0.9, 0.9, 0.9, 0.9], "IIIDIDISSX"),
    (&[0.5, 0.4, 0.5, 0.4, 0.5, 0.4], "IDDSSX"),
    (&[0.5, 0.5, 0.5, 0.5, 0.6, 0.5, 0.7, 0.5, 0.5, 0.5], "IDDSISISSX"),
    (&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0], "IDDSSX"),
    (&[0.1, 0.1, 0.2, 0.3, 0.3, 0.3, 0.3, 0.3], "IDIIDSSX"),
    (&[0.5, 0.5, 0.5, 0.5, 0.5, 0.51, 0.5, 0.5, 0.5], "IDDSSISSX"),
    (&[0.4, 0.5], "II"),
    (&[0.4], "I"),
    (&[0.6, 0.59, 0.58, 0.61, 0.6, 0.6, 0.62, 0.6, 0.6, 0.6], "IDDISSISSX"),
];
