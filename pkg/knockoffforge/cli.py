"""`python -m knockoffforge <subcommand>`: the hyphenated subcommands run as management commands."""
import os
import sys

SUBCOMMANDS = {
    'fit-joint': 'fit_joint',
    'fit-knockoff': 'fit_knockoff',
    'sample': 'sample',
    'select': 'select',
    'benchmark': 'benchmark',
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'knockoffforge.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError('knockoffforge needs Django; install the packages in requirements.txt') from exc

    if argv and argv[0] in SUBCOMMANDS:
        argv[0] = SUBCOMMANDS[argv[0]]
    execute_from_command_line(['knockoffforge', *argv])


if __name__ == '__main__':
    main()
