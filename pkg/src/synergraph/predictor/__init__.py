"""Prompting, retrieval, the tiny language model and the direct prediction head."""
from .heads import DirectHead, direct_head
from .knowledge import DuplicateKey, KnowledgeBase, Miss, retrieve
from .lm import (
    ContextOverflow, LMConfig, TinyLM, greedy_decode, instruction_loss, lm_forward, masked_nll,
    task_loss,
)
from .prompts import MissingKnowledge, Prompt, build_prompt, load_questions, load_template
from .response import ParseFailure, StructuredResponse, parse_response, response_for, serialize
from .tokenizer import BOS, EMPTY_DESC, EOS, PAD, VOCAB_SIZE, detokenize, tokenize, tokenize_description

__all__ = [
    "DirectHead", "direct_head", "DuplicateKey", "KnowledgeBase", "Miss", "retrieve",
    "ContextOverflow", "LMConfig", "TinyLM", "greedy_decode", "instruction_loss", "lm_forward",
    "masked_nll", "task_loss", "MissingKnowledge", "Prompt", "build_prompt", "load_questions",
    "load_template", "ParseFailure", "StructuredResponse", "parse_response", "response_for",
    "serialize", "BOS", "EMPTY_DESC", "EOS", "PAD", "VOCAB_SIZE", "detokenize", "tokenize",
    "tokenize_description",
]
