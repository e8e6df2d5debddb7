//! Model-input assembly for zero-/few-shot query generation, the generation
//! backend contract, output clean-up, and in-context example screening.

mod backend;
mod fewshot;
mod templates;

pub use backend::{
    generate, Generation, GenerationBackend, GenerationParams, HttpBackend, StubBackend,
    TrainerConfig,
};
pub use fewshot::{
    select_few_shot_examples, CandidateScore, FewShotOptions, FewShotSelection, InContextExample,
};
pub use templates::{
    builtin_templates, find_template, postprocess, render_few_shot, render_zero_shot, FormatClass,
    PromptTemplate,
};
