// Built-in template bodies. Each can be replaced by a file at runtime.

pub const CROSS_MODAL: &str = "\
You are given the annotations of an image: several captions written by people who looked at it, \
and the list of objects that appear in it.

Captions:
{captions}

Objects: {objects}

Please design {count} cross-modal reasoning instructions based on the annotations to test whether a \
person has carefully observed and thought about the image. Write all {count} instructions at one time. \
The instructions must meet the following conditions:
1. Each question involves details in the image and mentions as many of the listed entities as possible.
2. The questions and answers are as diverse as possible; do not ask the same thing twice.
3. Each question can only be answered by relating the mentioned entities to the objects in the image \
and reasoning about their relations; it must not be answerable from common sense alone.
4. Every answer is consistent with the annotations and mentions no object that is absent from them.
Tip: you may swap some entities or attributes in a question to tempt a careless reader, as long as \
the answer points out the swap.

Reply with exactly {count} question/answer pairs and nothing else, in this format:
Question 1: <instruction>
Answer 1: <response>
Question 2: <instruction>
Answer 2: <response>
(continue the numbering up to {count})
";

pub const OUTSIDE_KNOWLEDGE: &str = "\
You are given the annotations of an image and one topic entity that appears in it.

Captions:
{captions}

Topic entity: {topic_entity}

Please design {count} outside-knowledge reasoning instruction(s) about the topic entity. \
The instruction should involve one or more hops of complex knowledge and complex reasoning based on \
the image. The knowledge and reasoning chain must be precise and hard enough that only well-educated \
people or experts in the relevant field could answer it well. The response must give the full \
reasoning and the final answer.

The instruction should draw on knowledge from these categories: {categories}.

Reply with exactly {count} question/answer pair(s) and nothing else, in this format:
Question 1: <instruction>
Answer 1: <response>
";

pub const COMPLICATION: &str = "\
You are a Prompt Rewriter. Rewrite the given visual instruction into a more complex one that would \
challenge strong multi-modal AI systems and well-educated humans. Focus on adding multi-hop outside \
knowledge about key objects in the image or extra reasoning steps. The rewritten instruction must \
still be grounded in the image annotations below, must stay answerable, and must not mention objects \
that are not annotated. Also write the matching response.

Captions:
{captions}

Objects: {objects}

Given instruction: {instruction}
Given response: {response}

Reply with the rewritten pair and nothing else, in this format:
Question 1: <rewritten instruction>
Answer 1: <rewritten response>
";

pub const VERIFICATION: &str = "\
You are a Prompt Judge. Decide whether the visual instruction below meets a high standard, using the \
image annotations as the ground truth. Principles:
1. The instruction and the response are both consistent with the content of the image, with no \
contradictions and no objects that are absent from the annotations.
2. An instruction that can be answered from its text alone, without the image, is not a good visual \
instruction.
3. The response answers the instruction correctly and completely.

Captions:
{captions}

Objects: {objects}

Instruction: {instruction}
Response: {response}

Explain your judgement briefly, then end your reply with a single line that is exactly \
\"Verdict: yes\" if the instruction passes or \"Verdict: no\" if it fails.
";

pub const REFORMULATE_BOOL: &str = "\
Convert the open-ended question and answer below into a bool question: a question whose expected \
answer is binary, either \"yes\" or \"no\". Keep the reasoning content of the original question and \
make sure the correct answer follows from the original answer.

Question: {instruction}
Answer: {response}

Reply in exactly this format and nothing else, where the answer is the single word yes or no:
Question 1: <bool question>
Answer 1: <yes or no>
";

pub const REFORMULATE_MULTICHOICE: &str = "\
Convert the open-ended question and answer below into a multi-choice question with exactly four \
options labelled A, B, C and D. Exactly one option is correct and follows from the original answer; \
the other three are plausible but wrong.

Question: {instruction}
Answer: {response}

Reply in exactly this format and nothing else:
Question: <multi-choice question>
A. <option>
B. <option>
C. <option>
D. <option>
Answer: <letter of the correct option>
";
