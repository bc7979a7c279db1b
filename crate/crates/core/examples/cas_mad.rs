//! Concept Association Score between image sets and the normalized MAD of
//! a prompt's scores across one axis.

use std::collections::HashSet;

use biasengine::concepts::{build_concept_set, cas, default_stopwords, ConceptSet, SynonymGroup, SynonymTable};
use biasengine::stats::{mad_max, mad_normalized, variability_alternatives};

fn concepts(answers: &[&str], images: usize, stop: &HashSet<String>) -> biasengine::Result<ConceptSet> {
    build_concept_set(answers, images, stop)
}

fn main() -> biasengine::Result<()> {
    let stop = default_stopwords();
    let synonyms = SynonymTable::new(vec![SynonymGroup {
        canonical: "man".into(),
        members: vec!["male".into(), "guy".into()],
    }])?;

    // answers a VQA model gave for two images per set
    let initial = concepts(&["man in a white apron", "guy holding a knife"], 2, &stop)?;
    let male = concepts(&["male chef in a white apron", "man holding a knife"], 2, &stop)?;
    let female = concepts(&["woman in a white apron", "woman holding a pan"], 2, &stop)?;

    let scores = [cas(&initial, &male, &synonyms), cas(&initial, &female, &synonyms)];
    println!("CAS male   = {:.3}", scores[0]);
    println!("CAS female = {:.3}", scores[1]);

    let mad = mad_normalized(&scores)?;
    let alt = variability_alternatives(&scores)?;
    println!("normalized MAD over gender = {mad:.3} (raw maximum for K=2 is {})", mad_max(2));
    println!(
        "alternatives: W1-to-uniform {:.3}, stddev {:.3}",
        alt.wasserstein_to_uniform.value, alt.stddev.value
    );

    // hand case: one shared concept out of a union of three
    let a = ConceptSet::new(vec![("man".into(), 10.0), ("beard".into(), 5.0)])?;
    let b = ConceptSet::new(vec![("man".into(), 5.0), ("hat".into(), 5.0)])?;
    println!("hand case CAS = {}", cas(&a, &b, &SynonymTable::empty()));
    Ok(())
}
