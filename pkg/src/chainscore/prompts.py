"""Prompt templates for every model role in the pipeline.

The five pipeline templates (generation, logic transformation, question NER,
triple extraction, re-inference) are fixed prose: rendering only substitutes
the input bindings appended after each template's closing line, never the
body. The three judge templates are small binary-verdict prompts used by the
attribution metrics.

Templates use string.Template placeholders ($name) because several bodies
contain literal JSON braces.
"""

from __future__ import annotations

import enum
from string import Template


class TemplateId(str, enum.Enum):
    GENERATE = "Generate"
    TRANSFORM = "Transform"
    TRIPLE_EXTRACT = "TripleExtract"
    QUESTION_NER = "QuestionNer"
    REINFER = "ReInfer"
    JUDGE_REL = "JudgeRel"
    JUDGE_SUPP = "JudgeSupp"
    JUDGE_NEED = "JudgeNeed"


class MissingBinding(KeyError):
    """A placeholder required by the template was not supplied."""


GENERATE_TEMPLATE = """Answer the given question using only the provided documents, ensuring that each reasoning step and conclusion is supported by citation tokens that refer to the specific document ID and sentence number.

Each document is structured with:
- Document ID (e.g., [1])
- Title
- Content in sentences marked with tags `<S#>` (e.g., `<S1>Sentence text<S1>`).

When forming the answer:
    1. **Read all provided documents in full.**
    2. **Identify relevant sentences** that help answer the question.
    3. **Construct a logical reasoning passage** before presenting the final conclusion, using citation tokens in the form "[DocumentID]<S#>" immediately after the statement they support.
    4. **Avoid including any information not supported by the provided documents.**
    5. **Don't copy the original sentence, but paraphrase it based on the meaning.**
    6. **Use as many short sentences as possible while retaining the key information.**
    7. **The final conclusion should appear strictly after the reasoning section.**

# Steps
    1. Parse the documents and break them into discrete facts based on `<S#>` markers.
    2. Identify which sentences are relevant to answering the question.
    3. Write a coherent reasoning chain that explains step-by-step how the evidence leads to the conclusion. Use citation tokens to indicate exact supporting sentences.
    4. Always place every step between <STATEMENT> and </STATEMENT>, don't copy the original sentence, but paraphrase it based on the meaning.
    5. Present the final well-formed answer/conclusion **after** the reasoning section.

# Output Format
The response must be structured as follows in plain text:
    **Reasoning:** [A multi-sentence explanation in logical order, with citations like `[1]<S1>` and `[2]<S3> or [1]<S1><S2>` immediately after referenced facts.]
    **Answer:** [A short, concise direct answer to the question.]

# Examples
**Example Input:**
    Question: Who discovered penicillin?
    Documents:
    Document [1]
        Title: History of Penicillin
        Content: `<S1>In 1928, Alexander Fleming made a groundbreaking discovery.<S1> <S2>He observed that mold killed bacteria in cultures.<S2> <S3>This discovery led to the development of penicillin.<S3>`
    Document [2]
        Title: Steven Spielberg's Biography
        Content: `<S1>Steven Spielberg is a famous filmmaker.<S1> <S2>He directed Jurassic Park.<S2> <S3>He was born in 1946.<S3>`
    Document [3]
        Title: Mark Twain's Biography
        Content: `<S1>Mark Twain was an American author.<S1> <S2>He wrote The Adventures of Tom Sawyer.<S2> <S3>He was born in 1835.<S3>`

**Example Output:**
    Reasoning: <STATEMENT> Alexander Fleming made a discovery [1]<S1> </STATEMENT>. <STATEMENT> He noticed that mold could kill bacteria in cultures, which directly led to the development of penicillin [1]<S2><S3>.</STATEMENT>
    Answer: Alexander Fleming.

# Notes
    - Always place every step between <STATEMENT> and </STATEMENT>.
    - Always place all reasoning before the conclusion.
    - Each claim in reasoning must be directly tied to specific citation tokens from the documents provided.
    - Do not fabricate citations or information.
    - If multiple documents contribute, cite them all where relevant.

Now, Please answer the following question:

Documents:
$document_block

Question: $question"""


TRANSFORM_TEMPLATE = """Reconstruct a given complex natural language reasoning process into a formal logical expression using intersection (∧). Focus on accurately identifying distinct reasoning components (conditions, premises, assertions) and mapping them to logical conjunctions (∧) for "AND". Preserve the original logical flow, but represent it in a symbolic form.

# Steps
    1. **Read and comprehend** the full natural reasoning process provided and question.
    2. **Break down** the text into minimal distinct logical statements or propositions. Assign each proposition a short label or variable (e.g., `P1`, `P2`).
    3. **Determine relationships** between propositions:
       - Use ∧ for conditions that must all be true (logical AND).
    4. **Reconstruct** the reasoning as a single logical expression combining ∧, preserving original precedence and grouping with parentheses as needed.
    5. **Double-check** that the reconstructed expression faithfully mirrors the intent of the natural reasoning process.
    6. **Ensure** the logical expression represents by P* rather than a statement.

# Output Format
    Output should be in **JSON** with the following structure:
    {
      "propositions": {
        "P1": "[first proposition in plain language]",
        "P2": "[second proposition in plain language]",
        "...": "..."
      },
      "logical_expression": "P1 ∧ P2 ..."
    }
    - Use UTF-8 characters for ∧.
    - Ensure parentheses are placed to preserve intended order of operations.
    - Keep propositions short but sufficient for clarity.
    - Keep the [] and <> corresponding to the original reasoning process.
    - Ensure the logical expression represents by P* rather than a statement.

# Examples
**Example 1**
**Input:**
    Question: Should we carry the unbrella?
    *Reasoning process:* "Step1: If it rains and the ground is wet[1]<S1>. Step2: if the forecast says there will be rain tomorrow[2]<S4>. Step3: we should carry an umbrella."
**Output:**
    {
      "propositions": {
        "P1": "It rains[1]<S1>",
        "P2": "The ground is wet[1]<S1>",
        "P3": "The forecast says there will be rain tomorrow[2]<S4>",
      },
      "logical_expression": "P1 ∧ P2"
    }
    ...

# Notes
    - Do not omit any condition from the original reasoning.
    - Maintain a consistent labeling convention for propositions.

Now, please reconstruct the following reasoning process into a logical expression:

Question: $question
Reasoning process: $reasoning"""


QUESTION_NER_TEMPLATE = """Perform Named Entity Recognition (NER) to identify and extract all entities from the given input question. Entities may include persons, organizations, locations, dates, times, events, products, etc. Clearly differentiate entity types. Reason through the text by first identifying potential entities, determining their type, then compiling the final extracted results. Conclusions (final extracted entity list) must appear last.

# Steps
    1. **Read and Understand** the given question carefully.
    2. **Identify Potential Entities** by scanning for proper nouns, temporal expressions, locations, etc.
    3. **Determine Entity Types** (e.g., Person, Organization, Location, Date, Time, Event, Product).
    4. **List the Entities** with their corresponding types in a structured format.
    5. Ensure the output only contains the extracted entities and their types, no additional text.

# Output Format
Output the result as a JSON object without code block formatting, containing:
    - "entities": an array of objects, each with:
      - "text": the exact entity text from the question
      - "type": the entity type

**Example**:
    Input: "Where did Barack Obama give his Nobel Prize lecture in 2009?
    Output:
    {
      "entities": [
        { "text": "Barack Obama", "type": "Person" },
        { "text": "Nobel Prize", "type": "Event" },
      ]
    }

# Notes
- Maintain exact text casing and spelling from the input question.
- Do not infer or guess entities beyond what is provided in the text.
- If no entities are found, return an empty "entities" array.

Now, please extract the entities from the following question:

$question"""


TRIPLE_EXTRACT_TEMPLATE = """Extract structured Wikidata-style triples (subject, predicate, object) from the provided sentence. Focus on representing facts and relationships in a clear, machine-readable format. Each triple should follow the structure "(entity, relationship, value)" and be derived through reasoning about the sentence meaning before listing conclusions.

# Steps
    1. **Understand the sentence**: Identify entities, relationships, and values explicitly or implicitly mentioned.
    2. **Reasoning**: Break down how each relationship is identified, including disambiguation of terms.
    3. **Triple extraction**: Formulate each triple in the "(subject, predicate, object)" structure.
    4. **Validate**: Ensure all triples are supported by the provided sentence and do not introduce facts not present.

# Output Format
    Respond in JSON format, with an array of objects, each containing:
        - "subject": the entity being described.
        - "predicate": the relationship between subject and object.
        - "object": the value or entity connected to the subject.

Example schema:
    [
      {
        "subject": "[EntityName]",
        "predicate": "[PredicateName]",
        "object": "[ObjectName]"
      }
    ]

# Examples
**Example 1**
    Input: Marie Curie was born in Warsaw.
    Reasoning:
        - Identify subject: Marie Curie.
        - Identify relationship: "place of birth".
        - Identify object: Warsaw.
    Output:
    [
      {
        "subject": "Marie Curie",
        "predicate": "place of birth",
        "object": "Warsaw"
      }
    ]
...

# Notes
- Be precise: only produce triples explicitly inferred from the provided sentence.
- Use standardized predicates wherever possible (e.g., "place of birth", "located in", "capital of").
- If the sentence contains multiple facts, output each fact as a separate triple in the array.
- Do not include any unrelated or speculative facts.

Now, please extract the triples from the following reasoning step:

$sentence"""


REINFER_TEMPLATE = """Generate an answer to a natural question by first producing clear, logical reasoning steps before arriving at the final conclusion. Ensure the reasoning is explicitly stated before the answer, and avoid skipping directly to the conclusion.

# Steps
    1. Read and fully understand the natural question provided.
    2. Break down the problem or question into smaller parts.
    3. Produce detailed, step-by-step reasoning explaining thought process and relevant facts.
    4. Ensure reasoning flows logically toward a conclusion.
    5. State the final answer only after the reasoning is complete.

# Output Format
    Provide the output in the following structure:
    - Reasoning: [Multi-sentence logical explanation of the path to answer, including any inference steps and key facts]
    - Answer: [Single sentence or short paragraph conclusion that directly addresses the natural question]

# Examples
Example 1
    - Question: [What is the capital of France?]
    - Reasoning: France is a country in Western Europe. Its most populous and historically significant city, known for landmarks like the Eiffel Tower, is Paris. Paris serves as the political, cultural, and economic center of the country and has been designated as its capital for centuries.
    - Answer: Paris.

# Notes
- Important: The reasoning section must precede the answer in every case.
- Avoid omitting logical steps even for simple questions—always provide full reasoning.
- Do not reproduce copyrighted text or song lyrics within reasoning or answer.

Now, please generate the reasoning process and answer for the following question:

Question: $question

Context: $context"""


JUDGE_REL_TEMPLATE = """You are checking citation relevance for a question-answering system.

Given a question, one statement from an answer, and the text of one passage
that the statement cites, decide whether the cited passage is relevant to the
statement: it must talk about the same facts the statement asserts.

Reply with a single character: 1 if the passage is relevant to the statement,
0 if it is not. Output nothing else.

Question: $question
Statement: $statement
Cited passage: $citation_text

Verdict:"""


JUDGE_SUPP_TEMPLATE = """You are checking citation support for a question-answering system.

Given a question, one statement from an answer, and the combined text of all
passages the statement cites, decide whether the cited passages fully support
the statement: every fact the statement asserts must be stated or directly
entailed by the passages.

Reply with a single character: 1 if the statement is fully supported,
0 if it is not. Output nothing else.

Question: $question
Statement: $statement
Cited passages: $evidence_text

Verdict:"""


JUDGE_NEED_TEMPLATE = """You are checking citation necessity for a question-answering system.

Given a question, a full answer, and one uncited statement from that answer,
decide whether the statement makes a factual claim that requires a supporting
citation. Greetings, restatements of the question, and pure logical glue do
not require citations; factual assertions do.

Reply with a single character: 1 if the statement needs a citation,
0 if it does not. Output nothing else.

Question: $question
Answer: $long_answer
Statement: $statement

Verdict:"""


_TEMPLATES: dict[TemplateId, Template] = {
    TemplateId.GENERATE: Template(GENERATE_TEMPLATE),
    TemplateId.TRANSFORM: Template(TRANSFORM_TEMPLATE),
    TemplateId.QUESTION_NER: Template(QUESTION_NER_TEMPLATE),
    TemplateId.TRIPLE_EXTRACT: Template(TRIPLE_EXTRACT_TEMPLATE),
    TemplateId.REINFER: Template(REINFER_TEMPLATE),
    TemplateId.JUDGE_REL: Template(JUDGE_REL_TEMPLATE),
    TemplateId.JUDGE_SUPP: Template(JUDGE_SUPP_TEMPLATE),
    TemplateId.JUDGE_NEED: Template(JUDGE_NEED_TEMPLATE),
}

STRICT_RETRY_SUFFIX = (
    "\n\nYour previous reply could not be parsed."
    " Return ONLY the requested output format, with no extra prose."
)


def render_prompt(template_id: TemplateId, bindings: dict[str, str]) -> str:
    """Substitute bindings into the template; body prose is untouched.

    Raises MissingBinding if a placeholder is not covered. Unused extra
    bindings are ignored.
    """
    template = _TEMPLATES[template_id]
    try:
        return template.substitute(bindings)
    except KeyError as exc:
        raise MissingBinding(
            f"template {template_id.value} missing binding {exc.args[0]!r}"
        ) from exc
