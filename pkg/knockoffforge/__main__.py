from knockoffforge.cli import main

main()
