import sys

from wpIsac.cli import main

if __name__ == '__main__':
    # e.g. python script.py sweep --config data/experiments/eta_sweep.cfg --out eta_sweep.csv
    sys.exit(main())
