import spacy as sp


def build():
    return sp.load("en_core_web_sm")
