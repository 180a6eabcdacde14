use super::network::{DvrModel, ModelInput};
use crate::ctc::{ctc_beam_decode, ctc_greedy_decode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::text::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoder {
    Greedy,
    Beam(usize),
}

/// Decodes one utterance to text.
pub fn predict<T: Scalar>(model: &DvrModel<T>, input: &ModelInput<'_, T>, decoder: Decoder, vocab: &Vocabulary) -> Result<String> {
    if vocab.len() != model.config().vocab_size {
        return Err(Error::Validation(format!(
            "vocabulary has {} symbols, model outputs {}",
            vocab.len(),
            model.config().vocab_size
        )));
    }
    let lattice = model.forward(input)?;
    let ids = match decoder {
        Decoder::Greedy => ctc_greedy_decode(&lattice),
        Decoder::Beam(width) => ctc_beam_decode(&lattice, width)?,
    };
    vocab.decode(&ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Variant};

    #[test]
    fn untrained_model_yields_valid_text() {
        let vocab = Vocabulary::default();
        let cfg = ModelConfig {
            variant: Variant::Discrete,
            k: 16,
            d_ff: 16,
            n_layers: 1,
            n_heads: 2,
            ..ModelConfig::default()
        };
        let model = DvrModel::<f32>::new(cfg, 0).unwrap();
        let codes: Vec<usize> = (0..30).map(|i| i % 16).collect();
        let input = ModelInput::codes(&codes);
        let greedy = predict(&model, &input, Decoder::Greedy, &vocab).unwrap();
        assert!(greedy.chars().all(|c| vocab.id_of(c).is_some()));
        let beam = predict(&model, &input, Decoder::Beam(4), &vocab).unwrap();
        assert!(beam.chars().all(|c| vocab.id_of(c).is_some()));
        let small = Vocabulary::new("<b>", vec!['a', 'b']).unwrap();
        assert!(predict(&model, &input, Decoder::Greedy, &small).is_err());
    }
}
