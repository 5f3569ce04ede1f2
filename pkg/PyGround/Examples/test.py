"""Runs every example script in its own interpreter.  Standard error of a
failing script is kept next to it in a .log file."""
import os
import subprocess
import sys

exampleList = [
    '00_codec.py',
    '01_worlds.py',
    '02_corpora.py',
    '03_train_tiny.py',
    '04_evaluate.py',
    '05_subclass.py',
    ]

EXAMPLE_DIR = os.path.dirname(os.path.abspath(__file__))
PYGROUND_PATH = os.path.dirname(os.path.dirname(EXAMPLE_DIR))


def run_example(scriptPath):
    """Return (passed, standard error) of one example."""
    environment = dict(os.environ)
    environment['PYTHONPATH'] = os.pathsep.join(
        filter(None, [PYGROUND_PATH, environment.get('PYTHONPATH')]))
    childProcess = subprocess.run([sys.executable, scriptPath],
                                  cwd=EXAMPLE_DIR, env=environment,
                                  stdout=subprocess.DEVNULL,
                                  stderr=subprocess.PIPE, text=True)
    return childProcess.returncode == 0, childProcess.stderr


def main():
    SHOW_DETAILED_ERROR_OUTPUT = True

    # output title message to shell
    print(('Running examples ' + '-' * 80)[:79], file=sys.stderr)

    nWork = 0
    nTests = len(exampleList)
    for testNumber, scriptPath in enumerate(exampleList, 1):
        print('%3i) %-67s' % (testNumber, scriptPath), end=' ',
              file=sys.stderr, flush=True)
        passed, errorOutput = run_example(scriptPath)

        # keep standard error of failing scripts
        if errorOutput and not passed:
            root, ext = os.path.splitext(scriptPath)
            with open(os.path.join(EXAMPLE_DIR, '%s.log' % root),
                      'w') as errorStream:
                errorStream.write(errorOutput)

        if passed:
            print('passed', file=sys.stderr)
            nWork += 1
        else:
            print('failed', file=sys.stderr)

    allPassed = 'PASSED' if nWork == nTests else 'FAILED'
    print('\nExamples %s: %i of %i were successful.' % (allPassed, nWork,
                                                       nTests),
          file=sys.stderr)
    if allPassed == 'FAILED' and SHOW_DETAILED_ERROR_OUTPUT:
        print('\nThe standard error of each failing script is stored next '
              'to it with a .log extension.', file=sys.stderr)
    return 0 if allPassed == 'PASSED' else 1


if __name__ == '__main__':
    sys.exit(main())
