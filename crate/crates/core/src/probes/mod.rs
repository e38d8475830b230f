//! Prompt construction, correctness checking, validation, and labeled
//! example sets for relations and concepts.

mod correctness;
mod prompts;
mod sets;
mod templates;

pub use correctness::{is_correct, is_correct_text};
pub use prompts::{render_prompts, PromptInstance, RenderedPrompts, Split};
pub use sets::{
    build_concept_set, build_labeled_set, build_tokenizer, continuations, validate_prompts,
    LabeledExample, LabeledExampleSet, Rejection, ValidationReport,
};
pub use templates::{
    PromptTemplate, StatementTemplate, TemplateSet, Variant, OBJECT_SLOT, SUBJECT_SLOT,
};
