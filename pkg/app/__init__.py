# Artin-Tits monoid toolkit
