"""Scaffolded AI tutoring service.

Students submit structured, staged questions against a daily quota; the
service grounds tutor feedback in an indexed course corpus, enforces a
post-feedback reflection step, and packages unresolved confusion for
instructor escalation. Every state change is journaled for recovery and
post-hoc analysis, and all student input passes injection guardrails
before anything reaches the language model.
"""

__version__ = "0.1.0"
