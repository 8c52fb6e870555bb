"""Reference line-tracer shim used by the test suite.

Usage: line_shim.py <target_file> <input_file> <report_file>

Runs the target as __main__ with stdin redirected from input_file, records
the executed line numbers of the target file only, and writes one line:

    lines=1,2,5|exception=ZeroDivisionError|kind=exception
"""

import os
import runpy
import sys
import traceback


def main():
    if len(sys.argv) != 4:
        print("usage: shim <target_file> <input_file> <report_file>", file=sys.stderr)
        return 2
    target, input_file, report_file = sys.argv[1:]
    target = os.path.abspath(target)
    try:
        with open(target, "rb"):
            pass
        stdin = open(input_file, "r", encoding="utf-8")
    except OSError as exc:
        print(f"shim: {exc}", file=sys.stderr)
        return 2

    executed = set()

    def tracer(frame, event, arg):
        if frame.f_code.co_filename != target:
            return None
        if event == "line":
            executed.add(frame.f_lineno)
        return tracer

    sys.stdin = stdin
    sys.argv = [target]
    exception = ""
    kind = "clean"
    sys.settrace(tracer)
    try:
        runpy.run_path(target, run_name="__main__")
    except SystemExit:
        pass
    except BaseException as exc:  # noqa: BLE001
        exception = type(exc).__name__
        kind = "exception"
        traceback.print_exc()
    finally:
        sys.settrace(None)
        sys.stdout.flush()

    lines = ",".join(str(n) for n in sorted(executed))
    with open(report_file, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"lines={lines}|exception={exception}|kind={kind}\n")
    return 0 if kind == "clean" else 1


if __name__ == "__main__":
    sys.exit(main())
