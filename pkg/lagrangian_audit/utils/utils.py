'''
Useful functions
'''
import os

from lagrangian_audit.utils.classes.verification_report import dumps_report_json


def ensure_dir(d):
    os.makedirs(d, exist_ok=True)


def dump_json_file(filename, contents):
    # same encoder as the reports so nan, inf and float formatting agree
    write_text_file(filename, dumps_report_json(contents))


def write_text_file(filename, text):
    with open(filename, 'w', encoding='utf8') as f:
        f.write(text)
